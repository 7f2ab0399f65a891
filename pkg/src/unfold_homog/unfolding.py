"""Discrete periodic unfolding on chart grids.

With the grid aligned to the cell lattice (eps = N_c * h per axis and
the chart box anchored on the eps-lattice), unfolding is an exact index
gather: T(f)(b, y_j) = f(eps*b + eps*j/N_c) reads the sample at index
b*N_c + j.  Cells straddling the chart boundary are excluded; their mass
is exactly the unfolding defect r(eps) that the residual reports.

The exchange identities (metric pairing, gradient, divergence) hold to
rounding on interior stencils precisely because both sides touch the
same samples; cell-edge stencils differ at first order and are reported
separately.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import AlignmentError, ConfigurationError, GeometryError
from .fieldgrid import (GridFunction, GridVectorField, diff_axis,
                        quadrature_weights)
from .geometry import Atlas, MetricField, _det, _inv, _min_eig, ramp_partition, validate_uc

ALIGN_TOL = 1e-9


@dataclass(frozen=True)
class UnfoldConfig:
    """Cell size eps and the per-cell sample count N_c (= eps/h)."""

    eps: float
    cells_per_eps: int

    def __post_init__(self):
        if not self.eps > 0:
            raise ConfigurationError(f"eps must be positive, got {self.eps}")
        if int(self.cells_per_eps) != self.cells_per_eps or self.cells_per_eps < 2:
            raise ConfigurationError(
                f"cells_per_eps must be an integer >= 2, got {self.cells_per_eps}")
        object.__setattr__(self, "cells_per_eps", int(self.cells_per_eps))

    @property
    def h(self):
        return self.eps / self.cells_per_eps


def check_alignment(f: GridFunction, cfg: UnfoldConfig):
    """Verify eps = N_c * h on every axis and the box anchor sits on the
    eps-lattice; raises AlignmentError naming the first bad axis."""
    for ax in range(f.n):
        ratio = cfg.eps / f.h[ax]
        if abs(ratio - cfg.cells_per_eps) > ALIGN_TOL * cfg.cells_per_eps:
            raise AlignmentError(
                f"axis {ax}: eps/h = {ratio!r} is not the configured "
                f"cells_per_eps = {cfg.cells_per_eps}", axis=ax)
        anchor = f.lo[ax] / cfg.eps
        if abs(anchor - round(anchor)) > ALIGN_TOL:
            raise AlignmentError(
                f"axis {ax}: box anchor {f.lo[ax]!r} is not on the "
                f"{cfg.eps}-lattice", axis=ax)


@dataclass
class UnfoldedField:
    """Samples T(f)(b, y): leading axes index full cells, trailing axes
    the in-cell lattice y_j = j/N_c in [0, 1)^n."""

    chart_id: str
    eps: float
    cells_per_eps: int
    cell_lo: np.ndarray        # integer lattice index of the first full cell
    cell_counts: tuple
    values: np.ndarray         # shape cell_counts + (N_c,)*n
    excluded_cells: list = field(default_factory=list)

    @property
    def n(self):
        return len(self.cell_counts)

    def y_axis(self):
        return np.arange(self.cells_per_eps) / self.cells_per_eps

    def y_points(self):
        axes = [self.y_axis() for _ in range(self.n)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def cell_anchors(self):
        """Chart coordinates of each cell's corner, shape cell_counts + (n,)."""
        axes = [self.eps * (self.cell_lo[i] + np.arange(self.cell_counts[i]))
                for i in range(self.n)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def anchor_plus_eps_y(self):
        """The unfolded points eps*b + eps*y, shape values.shape + (n,)."""
        anchors = self.cell_anchors()
        y = self.y_points()
        a = anchors.reshape(self.cell_counts + (1,) * self.n + (self.n,))
        return a + self.eps * y.reshape((1,) * self.n + y.shape)


def _gather(f: GridFunction, cfg: UnfoldConfig):
    check_alignment(f, cfg)
    nc = cfg.cells_per_eps
    counts = []
    b0 = []
    for ax in range(f.n):
        span = (f.hi[ax] - f.lo[ax]) / cfg.eps
        counts.append(int(np.floor(span + ALIGN_TOL)))
        b0.append(int(round(f.lo[ax] / cfg.eps)))
        if counts[-1] < 1:
            raise AlignmentError(
                f"axis {ax}: box shorter than one cell of size {cfg.eps}", axis=ax)
    sl = tuple(slice(0, c * nc) for c in counts)
    block = f.values[sl]
    # split each axis into (cell, in-cell) pairs, then bring cells forward
    split_shape = []
    for c in counts:
        split_shape.extend((c, nc))
    block = block.reshape(split_shape)
    order = list(range(0, 2 * f.n, 2)) + list(range(1, 2 * f.n, 2))
    values = np.ascontiguousarray(block.transpose(order))
    excluded = _excluded_cells(f, cfg, b0, counts)
    return np.array(b0), tuple(counts), values, excluded


def _excluded_cells(f, cfg, b0, counts):
    """Lattice cells meeting the box but not fully inside it."""
    n = f.n
    lo_cell = []
    hi_cell = []
    for ax in range(n):
        lo_cell.append(b0[ax])
        hi_cell.append(int(np.ceil((f.hi[ax] - f.lo[ax]) / cfg.eps - ALIGN_TOL)) + b0[ax])
    out = []
    for idx in np.ndindex(*[hi_cell[ax] - lo_cell[ax] for ax in range(n)]):
        cell = tuple(lo_cell[ax] + idx[ax] for ax in range(n))
        inside = all(cell[ax] - b0[ax] < counts[ax] for ax in range(n))
        if not inside:
            out.append(cell)
    return out


def unfold_local(f: GridFunction, cfg: UnfoldConfig) -> UnfoldedField:
    """Unfold one chart's samples; exact gather, no interpolation."""
    b0, counts, values, excluded = _gather(f, cfg)
    return UnfoldedField(chart_id=f.chart_id, eps=cfg.eps,
                         cells_per_eps=cfg.cells_per_eps, cell_lo=b0,
                         cell_counts=counts, values=values,
                         excluded_cells=excluded)


def unfold_vector(v: GridVectorField, cfg: UnfoldConfig):
    """Unfold each component; the result is tagged with the cell basis
    (transport is a retag, so it commutes with the gather bit for bit)."""
    fields = []
    for k in range(v.n):
        comp = GridFunction(v.chart_id, v.lo, v.h, v.components[..., k], v.kind)
        fields.append(unfold_local(comp, cfg))
    stacked = np.stack([u.values for u in fields], axis=-1)
    out = fields[0]
    return UnfoldedField(chart_id=out.chart_id, eps=out.eps,
                         cells_per_eps=out.cells_per_eps, cell_lo=out.cell_lo,
                         cell_counts=out.cell_counts, values=stacked,
                         excluded_cells=out.excluded_cells)


@dataclass
class UnfoldedMetric:
    """Unfolded metric entries and the frozen-anchor limit entries."""

    eps: float
    cells_per_eps: int
    cell_lo: np.ndarray
    cell_counts: tuple
    entries: np.ndarray        # cells + (N_c,)*n + (n, n)
    limit_entries: np.ndarray  # cells + (n, n), metric at each cell anchor

    @property
    def n(self):
        return self.limit_entries.shape[-1]

    def inverse(self):
        return _inv(self.entries, self.n)

    def sqrt_det(self):
        return np.sqrt(_det(self.entries, self.n))


def unfold_metric(metric: MetricField, f: GridFunction, cfg: UnfoldConfig) -> UnfoldedMetric:
    """Gather g_ij over the grid of f and freeze g at each cell anchor."""
    n = f.n
    entries = metric.matrix(f.points())
    parts = []
    for i in range(n):
        for j in range(n):
            comp = GridFunction(f.chart_id, f.lo, f.h, entries[..., i, j], f.kind)
            parts.append(unfold_local(comp, cfg).values)
    ref = unfold_local(f, cfg)
    shape = ref.values.shape + (n, n)
    unf = np.empty(shape)
    k = 0
    for i in range(n):
        for j in range(n):
            unf[..., i, j] = parts[k]
            k += 1
    anchors = ref.cell_anchors()
    limit = metric.matrix(anchors)
    if np.min(_min_eig(unf, n)) <= 1e-10:
        raise GeometryError("unfolded metric lost positive definiteness")
    return UnfoldedMetric(eps=cfg.eps, cells_per_eps=cfg.cells_per_eps,
                          cell_lo=ref.cell_lo, cell_counts=ref.cell_counts,
                          entries=unf, limit_entries=limit)


def _global_shifts(atlas: Atlas, eps: float):
    """Integer lattice shift of each chart relative to the first one."""
    report = validate_uc(atlas, eps)
    if not report.ok:
        raise GeometryError(
            "atlas is not compatible with eps=%r: %s" % (eps, "; ".join(report.messages)))
    ref = atlas.charts[0]
    shifts = {}
    for c in atlas.charts:
        d = (ref.offset - c.offset) / eps
        shifts[c.id] = np.round(d).astype(int)
    return shifts


def _default_partition(atlas: Atlas):
    if len(atlas.charts) == 1:
        cid = atlas.charts[0].id
        return {cid: lambda pts: np.ones(np.asarray(pts).shape[:-1])}
    if atlas.n == 1 and len(atlas.charts) == 2:
        return ramp_partition(atlas)
    raise ConfigurationError(
        "no default partition of unity for this atlas; supply one")


def unfold_global(fields: dict, atlas: Atlas, cfg: UnfoldConfig,
                  partition=None) -> UnfoldedField:
    """Partition-weighted unfolding over all charts, on the shared cell
    lattice (indices relative to the first chart's frame)."""
    shifts = _global_shifts(atlas, cfg.eps)
    partition = partition or _default_partition(atlas)
    locals_ = {}
    weights = {}
    for cid, f in fields.items():
        chart = atlas.chart(cid)
        if cid not in partition:
            raise ConfigurationError(f"partition missing chart {cid!r}")
        uf = unfold_local(f, cfg)
        pi = partition[cid](f.points())
        pw = unfold_local(GridFunction(cid, f.lo, f.h, pi, f.kind), cfg)
        locals_[cid] = (uf, chart)
        weights[cid] = pw
    n = atlas.n
    nc = cfg.cells_per_eps
    glo = None
    ghi = None
    for cid, (uf, _chart) in locals_.items():
        lo = uf.cell_lo + shifts[cid]
        hi = lo + np.array(uf.cell_counts)
        glo = lo if glo is None else np.minimum(glo, lo)
        ghi = hi if ghi is None else np.maximum(ghi, hi)
    counts = tuple(int(c) for c in (ghi - glo))
    acc = np.zeros(counts + (nc,) * n)
    wacc = np.zeros(counts + (nc,) * n)
    for cid, (uf, _chart) in locals_.items():
        lo = uf.cell_lo + shifts[cid] - glo
        sl = tuple(slice(lo[ax], lo[ax] + uf.cell_counts[ax]) for ax in range(n))
        acc[sl] += weights[cid].values * uf.values
        wacc[sl] += weights[cid].values
    covered = wacc > 0
    if covered.any():
        gap = np.max(np.abs(wacc[covered] - 1.0))
        if gap > 1e-12:
            raise ConfigurationError(
                f"partition of unity sums to 1 only within {gap:.3e} on covered cells")
    out = np.where(covered, acc, 0.0)
    excluded = [tuple(int(v) for v in (glo + np.array(idx)))
                for idx in np.ndindex(*counts)
                if not covered[idx].all()]
    return UnfoldedField(chart_id="__global__", eps=cfg.eps, cells_per_eps=nc,
                         cell_lo=glo, cell_counts=counts,
                         values=out, excluded_cells=excluded)


def overlap_gap(fields: dict, atlas: Atlas, cfg: UnfoldConfig) -> float:
    """Largest disagreement of chart-wise unfoldings on shared cells;
    zero to rounding when the charts sample one underlying function."""
    shifts = _global_shifts(atlas, cfg.eps)
    items = []
    for cid, f in fields.items():
        uf = unfold_local(f, cfg)
        items.append((uf.cell_lo + shifts[cid], uf))
    worst = 0.0
    for a in range(len(items)):
        for b in range(a + 1, len(items)):
            lo_a, uf_a = items[a]
            lo_b, uf_b = items[b]
            lo = np.maximum(lo_a, lo_b)
            hi = np.minimum(lo_a + np.array(uf_a.cell_counts),
                            lo_b + np.array(uf_b.cell_counts))
            if np.any(hi <= lo):
                continue
            sl_a = tuple(slice(int(lo[i] - lo_a[i]), int(hi[i] - lo_a[i]))
                         for i in range(atlas.n))
            sl_b = tuple(slice(int(lo[i] - lo_b[i]), int(hi[i] - lo_b[i]))
                         for i in range(atlas.n))
            worst = max(worst, float(np.max(np.abs(uf_a.values[sl_a] - uf_b.values[sl_b]))))
    return worst


def _unfolded_quadrature(cfg: UnfoldConfig, n: int):
    """Weight per (cell, y) sample in the M x Y measure: eps^n / N_c^n."""
    return (cfg.eps / cfg.cells_per_eps) ** n


def _as_fields(f, atlas):
    if isinstance(f, GridFunction):
        return {atlas.charts[0].id: f}
    return dict(f)


def _sqrt_det_like(metric, f):
    return GridFunction(f.chart_id, f.lo, f.h, metric.sqrt_det(f.points()), f.kind)


def ucm_residual(f, metric: MetricField, atlas: Atlas, cfg: UnfoldConfig,
                 partition=None) -> float:
    """Unfolding defect: |integral over M - cellwise unfolded sum|.

    Both sides use the cell-counting (rectangle) quadrature so that an
    exact tiling makes them literally the same sum; the residual is then
    the mass of boundary-straddling cells, and it vanishes at rate eps.
    """
    if np.any(atlas.cell_edge != 1.0):
        raise ConfigurationError("unfolding operates on the unit reference cell")
    fields = _as_fields(f, atlas)
    partition = partition or _default_partition(atlas)
    m_side = 0.0
    for cid, ff in fields.items():
        w = quadrature_weights(ff, "rectangle")
        sq = metric.sqrt_det(ff.points())
        pi = partition[cid](ff.points())
        m_side += float(np.sum(w * pi * ff.values * sq))
    uf = unfold_global(fields, atlas, cfg, partition)
    usq = unfold_global({cid: _sqrt_det_like(metric, ff) for cid, ff in fields.items()},
                        atlas, cfg, partition)
    u_side = float(np.sum(uf.values * usq.values)) * _unfolded_quadrature(cfg, atlas.n)
    return abs(m_side - u_side)


def norm_ratio(f, metric: MetricField, atlas: Atlas, cfg: UnfoldConfig, p=2.0,
               partition=None):
    """||T f||_p(M x Y) / ||f||_p(M); None when the denominator vanishes.

    Bounded by (max sqrt|G| / min sqrt|G|)^(1/p) * |Y|^(1/p) within a 5%
    discretization allowance; |Y| = 1 for the unit reference cell."""
    fields = _as_fields(f, atlas)
    partition = partition or _default_partition(atlas)
    uf = unfold_global(fields, atlas, cfg, partition)
    usq = unfold_global({cid: _sqrt_det_like(metric, ff) for cid, ff in fields.items()},
                        atlas, cfg, partition)
    if np.isinf(p):
        denom = max(float(np.max(np.abs(ff.values))) for ff in fields.values())
        if denom == 0.0:
            return None
        return float(np.max(np.abs(uf.values))) / denom
    num = float(np.sum(np.abs(uf.values) ** p * usq.values)) * _unfolded_quadrature(cfg, atlas.n)
    den = 0.0
    for cid, ff in fields.items():
        w = quadrature_weights(ff, "rectangle")
        sq = metric.sqrt_det(ff.points())
        pi = partition[cid](ff.points())
        den += float(np.sum(w * pi * np.abs(ff.values) ** p * sq))
    if den == 0.0:
        return None
    return (num / den) ** (1.0 / p)


def norm_ratio_bound(metric: MetricField, f: GridFunction, atlas: Atlas, p=2.0) -> float:
    sq = metric.sqrt_det(f.points())
    if np.isinf(p):
        return 1.05
    ratio = float(np.max(sq) / np.min(sq))
    return 1.05 * (ratio * atlas.cell_volume) ** (1.0 / p)


def _y_derivative(values, n, nc, axis):
    """d/dy_axis of unfolded samples, one-sided at the two cell-edge
    layers, central inside; spacing 1/N_c."""
    return diff_axis(values, n + axis, 1.0 / nc, kind="free")


@dataclass
class ExchangeReport:
    max_interior: float
    max_edge: float
    scale: float


def check_metric_exchange(v: GridVectorField, w: GridVectorField,
                          metric: MetricField, cfg: UnfoldConfig) -> float:
    """T(g_M(V, W)) versus g^{(x,eps)}(T V, T W); equal up to rounding."""
    from .fieldgrid import metric_pairing

    paired = metric_pairing(v, w, metric)
    lhs = unfold_local(paired, cfg).values
    uv = unfold_vector(v, cfg)
    uw = unfold_vector(w, cfg)
    tmpl = v.scalar_template()
    um = unfold_metric(metric, tmpl, cfg)
    rhs = np.einsum("...ij,...i,...j->...", um.entries, uv.values, uw.values)
    return float(np.max(np.abs(lhs - rhs)))


def check_gradient_exchange(f: GridFunction, metric: MetricField,
                            cfg: UnfoldConfig) -> ExchangeReport:
    """eps * T(grad_M f) versus grad of T(f) in the unfolded metric."""
    from .fieldgrid import grad_M

    n = f.n
    nc = cfg.cells_per_eps
    g = grad_M(f, metric)
    lhs = cfg.eps * unfold_vector(g, cfg).values
    uf = unfold_local(f, cfg)
    um = unfold_metric(metric, f, cfg)
    parts = np.stack([_y_derivative(uf.values, n, nc, ax) for ax in range(n)], axis=-1)
    rhs = np.einsum("...kj,...j->...k", um.inverse(), parts)
    return _split_report(lhs - rhs, n, nc, scale=float(np.max(np.abs(lhs))))


def check_divergence_exchange(v: GridVectorField, metric: MetricField,
                              cfg: UnfoldConfig) -> ExchangeReport:
    """eps * T(div_M V) versus the unfolded-metric divergence of T(V)."""
    from .fieldgrid import div_M

    n = v.n
    nc = cfg.cells_per_eps
    tmpl = v.scalar_template()
    lhs = cfg.eps * unfold_local(div_M(v, metric), cfg).values
    uv = unfold_vector(v, cfg)
    um = unfold_metric(metric, tmpl, cfg)
    sq = np.sqrt(_det(um.entries, n))
    acc = np.zeros_like(sq)
    for ax in range(n):
        acc += _y_derivative(sq * uv.values[..., ax], n, nc, ax)
    rhs = acc / sq
    return _split_report(lhs - rhs, n, nc, scale=float(np.max(np.abs(lhs))))


def _split_report(diff, n, nc, scale) -> ExchangeReport:
    interior = diff[tuple([slice(None)] * n + [slice(1, -1)] * n)]
    mask = np.ones(diff.shape, dtype=bool)
    mask[tuple([slice(None)] * n + [slice(1, -1)] * n)] = False
    edge = diff[mask]
    return ExchangeReport(
        max_interior=float(np.max(np.abs(interior))) if interior.size else 0.0,
        max_edge=float(np.max(np.abs(edge))) if edge.size else 0.0,
        scale=scale if scale > 0 else 1.0,
    )
