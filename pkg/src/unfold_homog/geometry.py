"""Charts, atlases, metric fields, and affine transports.

A manifold piece is described by an atlas of affine charts over a shared
abstract parameter domain: chart alpha maps p to linear @ p + offset_alpha.
All charts of one atlas share the linear part, so chart transitions are
pure translations; an atlas is compatible with a cell size eps when every
transition is a translation by eps times an integer vector.

Metrics are given by coefficient matrices g_ij as functions of the chart
coordinates (expressions, constants, or wrapped callables so that metric
pushforwards stay evaluable).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import expr as ex
from .errors import ConfigurationError, GeometryError

UC_REL_TOL = 1e-9
SPD_FLOOR = 1e-10
LINEAR_PART_TOL = 1e-12


@dataclass(frozen=True)
class AffineMap:
    """x -> matrix @ x + shift on R^n."""

    matrix: np.ndarray
    shift: np.ndarray

    def __post_init__(self):
        m = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        s = np.atleast_1d(np.asarray(self.shift, dtype=float))
        if m.shape[0] != m.shape[1] or m.shape[0] != s.shape[0]:
            raise ConfigurationError(f"affine map shape mismatch: {m.shape} vs {s.shape}")
        if abs(np.linalg.det(m)) < 1e-12:
            raise GeometryError("affine map is singular")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "shift", s)

    @property
    def n(self):
        return self.matrix.shape[0]

    @classmethod
    def identity(cls, n, shift=None):
        return cls(np.eye(n), np.zeros(n) if shift is None else shift)

    def __call__(self, points):
        pts = np.asarray(points, dtype=float)
        return pts @ self.matrix.T + self.shift

    def inverse(self) -> "AffineMap":
        inv = np.linalg.inv(self.matrix)
        return AffineMap(inv, -inv @ self.shift)

    def compose(self, other: "AffineMap") -> "AffineMap":
        """self after other: x -> self(other(x))."""
        return AffineMap(self.matrix @ other.matrix, self.matrix @ other.shift + self.shift)


@dataclass(frozen=True)
class Chart:
    """One affine chart with its image box (the coordinate patch grids live on)."""

    id: str
    box: tuple  # ((lo, hi), ...) per axis, in chart-image coordinates
    offset: np.ndarray
    linear: np.ndarray

    def __post_init__(self):
        box = tuple((float(lo), float(hi)) for lo, hi in self.box)
        for lo, hi in box:
            if not hi > lo:
                raise GeometryError(f"chart {self.id!r}: empty box axis [{lo}, {hi})")
        off = np.atleast_1d(np.asarray(self.offset, dtype=float))
        lin = np.atleast_2d(np.asarray(self.linear, dtype=float))
        if len(box) != off.shape[0] or lin.shape != (len(box), len(box)):
            raise GeometryError(f"chart {self.id!r}: dimension mismatch")
        if abs(np.linalg.det(lin)) < 1e-12:
            raise GeometryError(f"chart {self.id!r}: singular linear part")
        object.__setattr__(self, "box", box)
        object.__setattr__(self, "offset", off)
        object.__setattr__(self, "linear", lin)

    @property
    def n(self):
        return len(self.box)

    @property
    def lo(self):
        return np.array([b[0] for b in self.box])

    @property
    def hi(self):
        return np.array([b[1] for b in self.box])

    def map(self) -> AffineMap:
        return AffineMap(self.linear, self.offset)

    def abstract_box(self):
        """The chart's domain in abstract parameter coordinates (axis-aligned
        only when the shared linear part is; used for overlap bookkeeping)."""
        inv = self.map().inverse()
        corners = np.stack(
            np.meshgrid(*[(lo, hi) for lo, hi in self.box], indexing="ij"), axis=-1
        ).reshape(-1, self.n)
        mapped = inv(corners)
        return tuple((mapped[:, i].min(), mapped[:, i].max()) for i in range(self.n))


@dataclass(frozen=True)
class Atlas:
    """A finite family of charts sharing one linear part, plus the cell shape."""

    charts: tuple
    cell_edge: np.ndarray = None

    def __post_init__(self):
        charts = tuple(self.charts)
        if not charts:
            raise ConfigurationError("atlas has no charts")
        n = charts[0].n
        ids = [c.id for c in charts]
        if len(set(ids)) != len(ids):
            raise ConfigurationError(f"duplicate chart ids: {ids}")
        for c in charts:
            if c.n != n:
                raise ConfigurationError("charts of mixed dimension")
        edge = self.cell_edge
        edge = np.ones(n) if edge is None else np.atleast_1d(np.asarray(edge, dtype=float))
        if edge.shape != (n,) or np.any(edge <= 0):
            raise ConfigurationError(f"bad cell edge lengths {edge}")
        object.__setattr__(self, "charts", charts)
        object.__setattr__(self, "cell_edge", edge)

    @property
    def n(self):
        return self.charts[0].n

    def chart(self, chart_id) -> Chart:
        for c in self.charts:
            if c.id == chart_id:
                return c
        raise ConfigurationError(f"no chart {chart_id!r} in atlas")

    @property
    def cell_volume(self):
        return float(np.prod(self.cell_edge))


def single_chart_atlas(box, cell_edge=None, chart_id="main") -> Atlas:
    """Convenience: one identity chart over the given box."""
    n = len(box)
    chart = Chart(chart_id, tuple(box), np.zeros(n), np.eye(n))
    return Atlas((chart,), cell_edge)


@dataclass
class UCReport:
    """Outcome of the lattice-compatibility validation for one eps."""

    eps: float
    ok: bool
    pairs: list = field(default_factory=list)
    messages: list = field(default_factory=list)


def _charts_overlap(a: Chart, b: Chart):
    """Overlap test in a's image coordinates; valid for shared linear parts."""
    d = a.offset - b.offset
    for i in range(a.n):
        lo = max(a.box[i][0], b.box[i][0] + d[i])
        hi = min(a.box[i][1], b.box[i][1] + d[i])
        if hi <= lo:
            return False
    return True


def validate_uc(atlas: Atlas, eps: float) -> UCReport:
    """Check that every chart transition is a translation by eps * integers.

    Each overlapping pair is reported with its integer vector k or the
    violation; unequal linear parts are flagged regardless of eps.
    """
    if eps <= 0:
        raise ConfigurationError(f"eps must be positive, got {eps}")
    report = UCReport(eps=eps, ok=True)
    charts = atlas.charts
    ref = charts[0].linear
    for c in charts[1:]:
        if not np.allclose(c.linear, ref, rtol=0, atol=LINEAR_PART_TOL):
            report.ok = False
            report.messages.append(
                f"charts {charts[0].id!r} and {c.id!r} have unequal linear parts"
            )
    for i, a in enumerate(charts):
        for b in charts[i + 1 :]:
            if not _charts_overlap(a, b):
                continue
            d = a.offset - b.offset
            k = np.round(d / eps)
            err = np.max(np.abs(d - eps * k))
            entry = {
                "charts": (a.id, b.id),
                "k": k.astype(int).tolist(),
                "max_abs_error": float(err),
            }
            if err > UC_REL_TOL * eps:
                report.ok = False
                entry["violation"] = (
                    f"offset difference {d.tolist()} is not on the {eps}-lattice"
                )
                report.messages.append(
                    f"pair ({a.id!r}, {b.id!r}): {entry['violation']}"
                )
            report.pairs.append(entry)
    return report


class MetricField:
    """Symmetric positive definite coefficient field g_ij over a chart patch.

    Entries are expressions in x1..xn, plain constants, or a callable
    taking a point array of shape (..., n) and returning (..., n, n).
    """

    def __init__(self, n, matrix_fn, description="metric"):
        self.n = int(n)
        self._fn = matrix_fn
        self.description = description

    @classmethod
    def identity(cls, n) -> "MetricField":
        return cls.constant(np.eye(n))

    @classmethod
    def constant(cls, matrix) -> "MetricField":
        mat = np.atleast_2d(np.asarray(matrix, dtype=float))
        n = mat.shape[0]
        if not np.allclose(mat, mat.T, atol=1e-14):
            raise GeometryError(f"constant metric is not symmetric: {mat.tolist()}")

        def fn(points):
            pts = np.asarray(points, dtype=float)
            return np.broadcast_to(mat, pts.shape[:-1] + (n, n)).copy()

        return cls(n, fn, description=f"constant {mat.tolist()}")

    @classmethod
    def from_entries(cls, entries, n=None) -> "MetricField":
        """Build from an n x n nest of expression strings / numbers."""
        rows = list(entries)
        n = len(rows) if n is None else n
        names = ex.default_variables(n, "x")
        parsed = []
        for row in rows:
            prow = []
            for item in row:
                if isinstance(item, str):
                    prow.append(ex.parse(item, names))
                else:
                    prow.append(ex.Num(float(item)))
            parsed.append(prow)
        def fn(points):
            pts = np.asarray(points, dtype=float)
            env = {names[i]: pts[..., i] for i in range(n)}
            out = np.empty(pts.shape[:-1] + (n, n))
            for i in range(n):
                for j in range(n):
                    out[..., i, j] = ex.eval_node(parsed[i][j], env)
            return out

        return cls(n, fn, description="expression entries")

    def matrix(self, points) -> np.ndarray:
        """Evaluate g at points of shape (..., n); validates symmetry and SPD."""
        pts = np.asarray(points, dtype=float)
        g = self._fn(pts)
        sym_gap = np.max(np.abs(g - np.swapaxes(g, -1, -2)))
        if sym_gap > 1e-12:
            raise GeometryError(f"metric not symmetric (gap {sym_gap:.3e})")
        lam = _min_eig(g, self.n)
        if np.min(lam) <= SPD_FLOOR:
            bad = np.unravel_index(int(np.argmin(lam)), lam.shape) if lam.ndim else ()
            where = pts[bad] if lam.ndim else pts
            raise GeometryError(
                f"metric not positive definite at x={np.atleast_1d(where).tolist()} "
                f"(min eigenvalue {float(np.min(lam)):.3e})"
            )
        return g

    def metric_at(self, x):
        """(G, G_inv, sqrt_det) at a single point."""
        g = self.matrix(np.asarray(x, dtype=float))
        return g, _inv(g, self.n), np.sqrt(_det(g, self.n))

    def inverse(self, points):
        return _inv(self.matrix(points), self.n)

    def sqrt_det(self, points):
        return np.sqrt(_det(self.matrix(points), self.n))

    def min_eig(self, points):
        return _min_eig(self.matrix(points), self.n)

    def pushforward(self, fmap: AffineMap) -> "MetricField":
        """Coefficients of the same metric in coordinates z = fmap(x):
        g'(z) = J^-T g(fmap^-1 z) J^-1."""
        inv = fmap.inverse()
        jinv = inv.matrix  # = J^{-1}

        def fn(points):
            g = self.matrix(inv(points))
            return jinv.T @ g @ jinv  # broadcasts over leading axes

        return MetricField(self.n, fn, description=f"pushforward of {self.description}")


def _det(g, n):
    if n == 1:
        return g[..., 0, 0]
    if n == 2:
        return g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] * g[..., 1, 0]
    return np.linalg.det(g)


def _inv(g, n):
    if n == 1:
        out = np.empty_like(g)
        out[..., 0, 0] = 1.0 / g[..., 0, 0]
        return out
    if n == 2:
        d = _det(g, 2)
        out = np.empty_like(g)
        out[..., 0, 0] = g[..., 1, 1] / d
        out[..., 1, 1] = g[..., 0, 0] / d
        out[..., 0, 1] = -g[..., 0, 1] / d
        out[..., 1, 0] = -g[..., 1, 0] / d
        return out
    return np.linalg.inv(g)


def _min_eig(g, n):
    if n == 1:
        return g[..., 0, 0]
    if n == 2:
        tr = g[..., 0, 0] + g[..., 1, 1]
        disc = np.sqrt(np.maximum((g[..., 0, 0] - g[..., 1, 1]) ** 2
                                  + 4.0 * g[..., 0, 1] * g[..., 1, 0], 0.0))
        return 0.5 * (tr - disc)
    return np.linalg.eigvalsh(g)[..., 0]


def metric_pair(g: MetricField, v, w, points) -> np.ndarray:
    """g(v, w) pointwise for component arrays shaped (..., n)."""
    gm = g.matrix(points)
    return np.einsum("...ij,...i,...j->...", gm, v, w)


def ramp_partition(atlas: Atlas):
    """Default partition of unity for a 1D two-chart atlas: linear ramps on
    the overlap, constant 1 where only one chart covers.

    Returns {chart_id: callable on chart-image points (...,1) -> weights}.
    """
    if atlas.n != 1 or len(atlas.charts) != 2:
        raise ConfigurationError("ramp partition is defined for 1D two-chart atlases")
    a, b = atlas.charts
    d = (a.offset - b.offset)[0]
    # overlap in a's image coordinates
    lo = max(a.box[0][0], b.box[0][0] + d)
    hi = min(a.box[0][1], b.box[0][1] + d)
    if hi <= lo:
        raise ConfigurationError("charts do not overlap; no partition needed")
    # decide which chart extends left of the overlap in abstract terms
    a_left = a.box[0][0] < lo

    def weight(chart_is_left):
        def fn(points, _lo=lo, _hi=hi):
            x = np.asarray(points, dtype=float)[..., 0]
            t = np.clip((x - _lo) / (_hi - _lo), 0.0, 1.0)
            return 1.0 - t if chart_is_left else t

        return fn

    wa = weight(a_left)

    def wb(points):
        x = np.asarray(points, dtype=float)[..., 0] + d  # to a's coordinates
        t = np.clip((x - lo) / (hi - lo), 0.0, 1.0)
        return 1.0 - t if not a_left else t

    return {a.id: wa, b.id: wb}
