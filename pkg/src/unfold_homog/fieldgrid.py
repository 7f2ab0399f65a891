"""Uniform tensor-product grids over chart boxes and calculus on them.

Grid points are vertex-centered: axis i carries points lo_i + j*h_i.
Non-periodic grids include both endpoints; periodic grids drop the seam
point, so the index convention alone encodes the wrap.  All difference
stencils are second order (central inside, one-sided at non-periodic
edges), and quadrature is trapezoidal except for periodic axes where the
plain rectangle rule is the natural (and spectrally accurate) choice.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import expr as ex
from .errors import ConfigurationError
from .geometry import MetricField

KINDS = ("dirichlet", "periodic", "free")


@dataclass
class GridFunction:
    """Scalar samples on a uniform grid over one chart's box."""

    chart_id: str
    lo: np.ndarray
    h: np.ndarray
    values: np.ndarray
    kind: str = "free"

    def __post_init__(self):
        self.lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        self.h = np.atleast_1d(np.asarray(self.h, dtype=float))
        self.values = np.asarray(self.values, dtype=float)
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown grid kind {self.kind!r}")
        if self.values.ndim != self.lo.shape[0] or self.lo.shape != self.h.shape:
            raise ConfigurationError(
                f"grid dimension mismatch: values {self.values.shape}, lo {self.lo.shape}"
            )
        if np.any(self.h <= 0):
            raise ConfigurationError(f"spacings must be positive, got {self.h}")
        min_pts = 2 if self.kind == "periodic" else 3
        if min(self.values.shape) < min_pts:
            raise ConfigurationError(
                f"grid needs at least {min_pts} points per axis, got {self.values.shape}"
            )

    @property
    def n(self):
        return self.values.ndim

    @property
    def shape(self):
        return self.values.shape

    @property
    def hi(self):
        extra = 1 if self.kind == "periodic" else 0
        return self.lo + self.h * (np.array(self.shape) - 1 + extra)

    def axis_points(self, i):
        return self.lo[i] + self.h[i] * np.arange(self.shape[i])

    def points(self):
        """All grid points, shape self.shape + (n,)."""
        axes = [self.axis_points(i) for i in range(self.n)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def like(self, values, kind=None) -> "GridFunction":
        return GridFunction(self.chart_id, self.lo, self.h, values, kind or self.kind)

    def copy(self) -> "GridFunction":
        return self.like(self.values.copy())


@dataclass
class GridVectorField:
    """Vector samples on a grid; components indexed by the trailing axis.

    basis is "manifold" for components along d/dx^i or "cell" for d/dy^i;
    transport between the two is a pure retag (same numbers).
    """

    chart_id: str
    lo: np.ndarray
    h: np.ndarray
    components: np.ndarray  # shape grid_shape + (n,)
    kind: str = "free"
    basis: str = "manifold"

    def __post_init__(self):
        self.lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        self.h = np.atleast_1d(np.asarray(self.h, dtype=float))
        self.components = np.asarray(self.components, dtype=float)
        if self.basis not in ("manifold", "cell"):
            raise ConfigurationError(f"unknown basis tag {self.basis!r}")
        if self.components.shape[-1] != self.lo.shape[0]:
            raise ConfigurationError("component count must match dimension")

    @property
    def n(self):
        return self.lo.shape[0]

    @property
    def grid_shape(self):
        return self.components.shape[:-1]

    def scalar_template(self) -> GridFunction:
        return GridFunction(self.chart_id, self.lo, self.h,
                            self.components[..., 0], self.kind)

    def points(self):
        return self.scalar_template().points()


def transport_to_cell(v: GridVectorField) -> GridVectorField:
    """Retag manifold-basis components as cell-basis; values untouched."""
    if v.basis != "manifold":
        raise ConfigurationError("transport_to_cell expects a manifold-basis field")
    return GridVectorField(v.chart_id, v.lo, v.h, v.components, v.kind, basis="cell")


def transport_to_manifold(w: GridVectorField) -> GridVectorField:
    if w.basis != "cell":
        raise ConfigurationError("transport_to_manifold expects a cell-basis field")
    return GridVectorField(w.chart_id, w.lo, w.h, w.components, w.kind, basis="manifold")


def make_grid(box, h, kind="free", chart_id="main"):
    """Point counts and lo/h arrays for a box [lo, hi) with spacing h.

    h may be a scalar or per-axis; (hi - lo)/h must be an integer within
    1e-9 relative so the grid exactly covers the box.
    """
    box = tuple((float(lo), float(hi)) for lo, hi in box)
    n = len(box)
    h = np.broadcast_to(np.asarray(h, dtype=float), (n,)).copy()
    shape = []
    for i, (lo, hi) in enumerate(box):
        ratio = (hi - lo) / h[i]
        n_int = round(ratio)
        if n_int < 1 or abs(ratio - n_int) > 1e-9 * max(1.0, ratio):
            raise ConfigurationError(
                f"axis {i}: box [{lo}, {hi}) is not an integer number of steps of {h[i]}"
            )
        shape.append(n_int if kind == "periodic" else n_int + 1)
    lo = np.array([b[0] for b in box])
    return lo, h, tuple(shape)


def grid_from_callable(box, h, fn, kind="free", chart_id="main") -> GridFunction:
    """Sample a callable (or parsed expression) on the grid covering box."""
    lo, hh, shape = make_grid(box, h, kind, chart_id)
    axes = [lo[i] + hh[i] * np.arange(shape[i]) for i in range(len(shape))]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    if isinstance(fn, (ex.Num, ex.Var, ex.Neg, ex.BinOp, ex.Call)):
        names = ex.default_variables(len(shape), "x")
        env = {names[i]: pts[..., i] for i in range(len(shape))}
        vals = np.broadcast_to(ex.eval_node(fn, env), shape).astype(float)
    else:
        vals = np.asarray(fn(pts), dtype=float)
        vals = np.broadcast_to(vals, shape).astype(float)
    return GridFunction(chart_id, lo, hh, vals.copy(), kind)


def diff_axis(values: np.ndarray, axis: int, h: float, kind: str) -> np.ndarray:
    """Second-order first derivative along one axis.

    Central differences inside; periodic axes wrap; otherwise the
    boundary uses the one-sided three-point stencil (exact on quadratics).
    """
    if kind == "periodic":
        return (np.roll(values, -1, axis) - np.roll(values, 1, axis)) / (2.0 * h)
    out = np.empty_like(values)
    sl = [slice(None)] * values.ndim

    def at(idx):
        s = list(sl)
        s[axis] = idx
        return tuple(s)

    out[at(slice(1, -1))] = (values[at(slice(2, None))] - values[at(slice(0, -2))]) / (2.0 * h)
    out[at(0)] = (-3.0 * values[at(0)] + 4.0 * values[at(1)] - values[at(2)]) / (2.0 * h)
    out[at(-1)] = (3.0 * values[at(-1)] - 4.0 * values[at(-2)] + values[at(-3)]) / (2.0 * h)
    return out


def grad_M(f: GridFunction, metric: MetricField) -> GridVectorField:
    """Riemannian gradient: components (grad f)^k = g^{kj} d_j f."""
    pts = f.points()
    ginv = metric.inverse(pts)
    parts = np.stack(
        [diff_axis(f.values, i, f.h[i], f.kind) for i in range(f.n)], axis=-1
    )
    comps = np.einsum("...kj,...j->...k", ginv, parts)
    return GridVectorField(f.chart_id, f.lo, f.h, comps, f.kind, basis="manifold")


def div_M(v: GridVectorField, metric: MetricField) -> GridFunction:
    """Riemannian divergence: (1/sqrt|G|) d_k (sqrt|G| V^k)."""
    pts = v.points()
    sq = metric.sqrt_det(pts)
    out = np.zeros(v.grid_shape)
    for k in range(v.n):
        out += diff_axis(sq * v.components[..., k], k, v.h[k], v.kind)
    out /= sq
    return GridFunction(v.chart_id, v.lo, v.h, out, v.kind)


def quadrature_weights(f: GridFunction, rule: str = "default") -> np.ndarray:
    """Per-point quadrature weights as an outer product of axis rules.

    rule "default": trapezoid on non-periodic axes, rectangle on periodic.
    rule "rectangle": plain h weight everywhere except the trailing
    endpoint of non-periodic axes (the cell-counting rule the unfolding
    comparison needs; identical to "default" on periodic axes).
    """
    axes = []
    for i in range(f.n):
        m = f.shape[i]
        w = np.full(m, f.h[i])
        if f.kind != "periodic":
            if rule == "rectangle":
                w[-1] = 0.0
            else:
                w[0] *= 0.5
                w[-1] *= 0.5
        axes.append(w)
    out = axes[0]
    for w in axes[1:]:
        out = np.multiply.outer(out, w)
    return out


def integrate_M(f: GridFunction, metric: MetricField, rule: str = "default") -> float:
    """Integral of f against the Riemannian volume, composite per-axis rule."""
    w = quadrature_weights(f, rule)
    sq = metric.sqrt_det(f.points())
    return float(np.sum(w * f.values * sq))


def norms(obj, metric: MetricField) -> dict:
    """L2 norm (and H1 seminorm for scalars) in the metric volume measure."""
    if isinstance(obj, GridFunction):
        l2 = np.sqrt(integrate_M(obj.like(obj.values**2), metric))
        g = grad_M(obj, metric)
        return {"l2": float(l2), "h1_semi": _vector_l2(g, metric)}
    if isinstance(obj, GridVectorField):
        return {"l2": _vector_l2(obj, metric), "h1_semi": None}
    raise ConfigurationError(f"cannot take norms of {type(obj).__name__}")


def _vector_l2(v: GridVectorField, metric: MetricField) -> float:
    pts = v.points()
    g = metric.matrix(pts)
    quad = np.einsum("...ij,...i,...j->...", g, v.components, v.components)
    tmpl = GridFunction(v.chart_id, v.lo, v.h, quad, v.kind)
    return float(np.sqrt(max(integrate_M(tmpl, metric), 0.0)))


def metric_pairing(v: GridVectorField, w: GridVectorField, metric: MetricField) -> GridFunction:
    """Pointwise g(V, W) as a scalar grid function."""
    if v.basis != w.basis:
        raise ConfigurationError("metric pairing requires matching basis tags")
    pts = v.points()
    g = metric.matrix(pts)
    vals = np.einsum("...ij,...i,...j->...", g, v.components, w.components)
    return GridFunction(v.chart_id, v.lo, v.h, vals, v.kind)


def to_csv(f: GridFunction, path) -> None:
    """Row-major CSV export: coordinate columns then the value column."""
    names = [f"x{i + 1}" for i in range(f.n)]
    pts = f.points().reshape(-1, f.n)
    vals = f.values.reshape(-1)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(names + ["value"])
        for row, v in zip(pts, vals):
            wr.writerow([format(c, ".17g") for c in row] + [format(v, ".17g")])


def linf_gap(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))
