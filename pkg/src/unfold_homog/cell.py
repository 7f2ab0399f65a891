"""Periodic cell problems and effective (homogenized) tensors.

For a coefficient D on the cell and a frozen metric matrix G, the
corrector w_i solves, in weak form with Y-periodic mean-zero trial
space,

    sum_{m,n} int D g^{mn} d_m w_i d_n phi dy = - int D d_i phi dy,

one problem per direction i (general right-hand vector fields Q are
supported for the transform checks).  The effective tensor is

    B^k_i = (1/|Y|) int D (delta^k_i + g^{kj} d_j w_i) dy,

and its lowered form Btilde = G B is symmetric positive definite; the
quadratic-form evaluation of Btilde agrees with the direct one up to
solver tolerance because both reduce to the same discrete sums.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import expr as ex
from .errors import ConfigurationError, GeometryError
from .geometry import AffineMap, MetricField, _inv, _min_eig
from .linalg import cg
from .stencils import PeriodicOperator, periodic_rhs

DEFAULT_TOL = 1e-10


class CoefficientField:
    """Positive scalar coefficient on the periodic cell.

    Evaluation wraps points into the cell box, so callers never worry
    about the seam.  Bounds (d0, D0) are validated against samples when
    provided and estimated from samples when not.
    """

    def __init__(self, n, fn, d0=None, D0=None, cell_lo=None, cell_edge=None,
                 description="coefficient"):
        self.n = int(n)
        self._fn = fn
        self.d0 = d0
        self.D0 = D0
        # declared bounds are hard constraints; estimated ones only track samples
        self._declared_d0 = d0 is not None
        self._declared_D0 = D0 is not None
        self.cell_lo = np.zeros(n) if cell_lo is None else np.atleast_1d(
            np.asarray(cell_lo, dtype=float))
        self.cell_edge = np.ones(n) if cell_edge is None else np.atleast_1d(
            np.asarray(cell_edge, dtype=float))
        if np.any(self.cell_edge <= 0):
            raise ConfigurationError(f"cell edges must be positive: {self.cell_edge}")
        self.description = description

    @property
    def cell_volume(self):
        return float(np.prod(self.cell_edge))

    def wrap(self, points):
        pts = np.asarray(points, dtype=float)
        return self.cell_lo + np.mod(pts - self.cell_lo, self.cell_edge)

    def __call__(self, points):
        return np.asarray(self._fn(self.wrap(points)), dtype=float)

    @classmethod
    def from_expr(cls, src, n, d0=None, D0=None, cell_edge=None) -> "CoefficientField":
        names = ex.default_variables(n, "y")
        tree = ex.parse(src, names) if isinstance(src, str) else src

        def fn(points):
            env = {names[i]: points[..., i] for i in range(n)}
            return np.broadcast_to(ex.eval_node(tree, env), points.shape[:-1])

        return cls(n, fn, d0, D0, cell_edge=cell_edge, description=f"expr {src!r}")

    @classmethod
    def constant(cls, value, n, cell_edge=None) -> "CoefficientField":
        value = float(value)

        def fn(points):
            return np.full(points.shape[:-1], value)

        return cls(n, fn, d0=value, D0=value, cell_edge=cell_edge,
                   description=f"constant {value}")

    @classmethod
    def from_table(cls, values, cell_edge=None) -> "CoefficientField":
        """Periodic multilinear interpolation of samples at j/N per axis."""
        table = np.asarray(values, dtype=float)
        n = table.ndim
        shape = np.array(table.shape)
        edge = np.ones(n) if cell_edge is None else np.asarray(cell_edge, dtype=float)

        def fn(points):
            rel = (points - 0.0) / edge * shape  # cell_lo folded in by wrap()
            base = np.floor(rel).astype(int)
            frac = rel - base
            out = np.zeros(points.shape[:-1])
            for corner in np.ndindex(*(2,) * n):
                idx = tuple((base[..., i] + corner[i]) % shape[i] for i in range(n))
                wgt = np.ones(points.shape[:-1])
                for i in range(n):
                    wgt = wgt * (frac[..., i] if corner[i] else 1.0 - frac[..., i])
                out += wgt * table[idx]
            return out

        # multilinear interpolants stay inside the sample range, so these
        # are true bounds rather than estimates
        return cls(n, fn, d0=float(table.min()), D0=float(table.max()),
                   cell_edge=edge, description=f"table {table.shape}")

    def pushforward(self, fmap: AffineMap) -> "CoefficientField":
        """The same coefficient in coordinates z = fmap(y).

        Restricted to maps keeping the cell a coordinate box (signed
        axis permutations and per-axis scalings)."""
        _require_box_map(fmap.matrix)
        inv = fmap.inverse()
        corners = fmap(np.stack([self.cell_lo, self.cell_lo + self.cell_edge]))
        new_lo = corners.min(axis=0)
        new_edge = corners.max(axis=0) - new_lo

        def fn(points):
            return self._fn(self.wrap(inv(points)))

        out = CoefficientField(self.n, fn, self.d0, self.D0, new_lo, new_edge,
                               description=f"pushforward of {self.description}")
        out._declared_d0 = self._declared_d0
        out._declared_D0 = self._declared_D0
        return out

    def center_samples(self, n_cells) -> np.ndarray:
        """Values at cell-center quadrature points, shape (n_cells,)*n."""
        pts = cell_centers(self.cell_lo, self.cell_edge, n_cells)
        vals = self(pts)
        self.validate_bounds(vals)
        return vals

    def validate_bounds(self, samples):
        lo = float(np.min(samples))
        hi = float(np.max(samples))
        if lo <= 0.0:
            raise ConfigurationError(
                f"coefficient must be positive; sampled minimum {lo:.3e}")
        if self._declared_d0 and lo < self.d0 * (1 - 1e-12):
            raise ConfigurationError(
                f"coefficient drops below declared d0={self.d0}: sampled {lo:.6e}")
        if self._declared_D0 and hi > self.D0 * (1 + 1e-12):
            raise ConfigurationError(
                f"coefficient exceeds declared D0={self.D0}: sampled {hi:.6e}")
        if not self._declared_d0:
            self.d0 = lo if self.d0 is None else min(self.d0, lo)
        if not self._declared_D0:
            self.D0 = hi if self.D0 is None else max(self.D0, hi)


def _require_box_map(matrix):
    m = np.abs(np.atleast_2d(matrix))
    ok = np.all((m > 1e-12).sum(axis=0) == 1) and np.all((m > 1e-12).sum(axis=1) == 1)
    if not ok:
        raise ConfigurationError(
            "transform must be a signed axis permutation times positive scalings")


def cell_centers(cell_lo, cell_edge, n_cells) -> np.ndarray:
    n = len(cell_edge)
    axes = [cell_lo[i] + cell_edge[i] * (np.arange(n_cells) + 0.5) / n_cells
            for i in range(n)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


@dataclass
class CellSolution:
    """Correctors for one frozen metric: w[i] solves the problem driven
    along direction i (mean-zero, periodic, at cell-center samples)."""

    G: np.ndarray
    n_cells: int
    cell_lo: np.ndarray
    cell_edge: np.ndarray
    w: np.ndarray                 # shape (n,) + (n_cells,)*n
    d_cells: np.ndarray
    iterations: list
    residuals: list
    x: np.ndarray | None = None

    @property
    def n(self):
        return self.G.shape[0]

    @property
    def spacing(self):
        return self.cell_edge / self.n_cells

    @property
    def ginv(self):
        return _inv(self.G, self.n)

    def gradient(self, i) -> np.ndarray:
        """Central-difference y-gradient of w_i, shape cells + (n,)."""
        return _periodic_gradient(self.w[i], self.spacing)


def _periodic_gradient(w, spacing):
    parts = [(np.roll(w, -1, ax) - np.roll(w, 1, ax)) / (2.0 * spacing[ax])
             for ax in range(w.ndim)]
    return np.stack(parts, axis=-1)


def _check_metric_matrix(G, n):
    G = np.atleast_2d(np.asarray(G, dtype=float))
    if G.shape != (n, n):
        raise ConfigurationError(f"metric matrix must be {n}x{n}, got {G.shape}")
    if np.max(np.abs(G - G.T)) > 1e-12:
        raise GeometryError("frozen metric matrix is not symmetric")
    if _min_eig(G, n) <= 1e-10:
        raise GeometryError(f"frozen metric matrix is not SPD: {G.tolist()}")
    return G


def solve_cell_rhs(D: CoefficientField, G, n_cells, q, tol=DEFAULT_TOL,
                   maxiter=None, d_cells=None):
    """Solve one periodic cell problem with right-hand vector field Q.

    q is an array of shape cells + (n,) at cell centers, or a constant
    vector.  Returns (w, iterations, relative_residual)."""
    n = D.n
    G = _check_metric_matrix(G, n)
    if d_cells is None:
        d_cells = D.center_samples(n_cells)
    spacing = D.cell_edge / n_cells
    q = np.asarray(q, dtype=float)
    if q.shape == (n,):
        q = np.broadcast_to(q, d_cells.shape + (n,))
    op = PeriodicOperator(d_cells, _inv(G, n), spacing)
    b = periodic_rhs(d_cells, q, spacing)
    if maxiter is None:
        maxiter = 50 * n_cells * (2 if n == 2 else 1) + 200
    w, iters, res = cg(op, b, tol=tol, maxiter=maxiter, project_mean=True)
    return w, iters, res


def solve_cell(D: CoefficientField, G, n_cells, tol=DEFAULT_TOL, x=None,
               maxiter=None) -> CellSolution:
    """Solve the n canonical cell problems (Q = basis direction i)."""
    n = D.n
    G = _check_metric_matrix(G, n)
    d_cells = D.center_samples(n_cells)
    ws, iters, ress = [], [], []
    for i in range(n):
        q = np.zeros(n)
        q[i] = 1.0
        w, k, r = solve_cell_rhs(D, G, n_cells, q, tol=tol, maxiter=maxiter,
                                 d_cells=d_cells)
        ws.append(w)
        iters.append(k)
        ress.append(r)
    return CellSolution(G=G, n_cells=n_cells, cell_lo=D.cell_lo.copy(),
                        cell_edge=D.cell_edge.copy(), w=np.stack(ws),
                        d_cells=d_cells, iterations=iters, residuals=ress,
                        x=None if x is None else np.asarray(x, dtype=float))


@dataclass
class EffectiveTensor:
    """Homogenized tensor at one base point (or for one constant metric)."""

    G: np.ndarray
    B: np.ndarray        # B[k, i] = B^k_i, mixed components
    B_tilde: np.ndarray  # lowered: G @ B, symmetric
    eigenvalues: np.ndarray
    x: np.ndarray | None = None
    corrector_gradients: np.ndarray | None = field(default=None, repr=False)

    @property
    def n(self):
        return self.B.shape[0]


def assemble_effective(D: CoefficientField, sol: CellSolution) -> EffectiveTensor:
    """Cell averages of D (delta + grad-correction) and the lowered tensor."""
    n = sol.n
    ginv = sol.ginv
    d = sol.d_cells
    mean_d = float(np.mean(d))
    B = np.empty((n, n))
    grads = np.empty((n,) + d.shape + (n,))
    for i in range(n):
        dw = sol.gradient(i)          # cells + (n,), partial derivatives
        grads[i] = dw
        a_ik = np.einsum("kj,...j->...k", ginv, dw)  # (grad^{(x)} w_i)^k
        for k in range(n):
            B[k, i] = (1.0 if i == k else 0.0) * mean_d + float(np.mean(d * a_ik[..., k]))
    B_tilde = sol.G @ B
    eigs = np.linalg.eigvalsh(0.5 * (B_tilde + B_tilde.T))
    return EffectiveTensor(G=sol.G.copy(), B=B, B_tilde=B_tilde, eigenvalues=eigs,
                           x=None if sol.x is None else sol.x.copy(),
                           corrector_gradients=grads)


def btilde_quadratic(D: CoefficientField, sol: CellSolution) -> np.ndarray:
    """Btilde via the energy quadratic form; exactly symmetric by
    construction and equal to the direct assembly up to solver tolerance."""
    n = sol.n
    d = sol.d_cells
    mean_d = float(np.mean(d))
    spacing = sol.spacing
    op = PeriodicOperator(d, sol.ginv, spacing)
    cells_total = d.size
    ell = np.empty((n, n))  # ell[b, a] = mean of D * d_b w_a
    for a in range(n):
        dw = sol.gradient(a)
        for b_ in range(n):
            ell[b_, a] = float(np.mean(d * dw[..., b_]))
    out = np.empty((n, n))
    for a in range(n):
        for b_ in range(a, n):
            energy = op.energy(sol.w[a], sol.w[b_]) / cells_total
            val = sol.G[b_, a] * mean_d + ell[b_, a] + ell[a, b_] + energy
            out[b_, a] = val
            out[a, b_] = val
    return out


def check_spd(t: EffectiveTensor, d0=None, metric_min_eig=None, warn=True) -> dict:
    """Symmetry and positivity report for an effective tensor.

    The Reuss-style floor min_eig >= 0.9 * d0 * lambda_min(G) is a
    plausibility screen, not a theorem; falling below it warns rather
    than fails."""
    bt = t.B_tilde
    scale = max(1.0, float(np.max(np.abs(bt))))
    sym_gap = float(np.max(np.abs(bt - bt.T)))
    min_eig = float(np.min(t.eigenvalues))
    report = {
        "symmetry_gap": sym_gap,
        "symmetric": sym_gap <= 1e-8 * scale,
        "min_eigenvalue": min_eig,
        "positive_definite": min_eig > 0.0,
        "floor": None,
        "floor_ok": None,
    }
    if d0 is not None and metric_min_eig is not None:
        floor = 0.9 * d0 * metric_min_eig
        report["floor"] = floor
        report["floor_ok"] = bool(min_eig >= floor)
        if warn and not report["floor_ok"]:
            warnings.warn(
                f"effective tensor minimum eigenvalue {min_eig:.6e} fell below "
                f"the heuristic floor {floor:.6e}",
                stacklevel=2,
            )
    return report


def _quantize_key(G, quantum=1e-12):
    return tuple(np.round(np.asarray(G, dtype=float) / quantum).astype(np.int64).ravel())


def effective_field(metric: MetricField, D: CoefficientField, x_points,
                    n_cells, tol=DEFAULT_TOL) -> list:
    """Effective tensors at several base points, solving each distinct
    frozen metric once (matrices matched after 1e-12 quantization)."""
    pts = np.atleast_2d(np.asarray(x_points, dtype=float))
    cache = {}
    out = []
    for x in pts:
        G = metric.matrix(x)
        key = _quantize_key(G)
        if key not in cache:
            sol = solve_cell(D, G, n_cells, tol=tol, x=x)
            cache[key] = assemble_effective(D, sol)
        cached = cache[key]
        out.append(EffectiveTensor(G=cached.G, B=cached.B, B_tilde=cached.B_tilde,
                                   eigenvalues=cached.eigenvalues, x=np.asarray(x),
                                   corrector_gradients=cached.corrector_gradients))
    return out
