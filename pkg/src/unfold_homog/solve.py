"""Fine-scale and homogenized boundary-value solvers plus the sweep harness.

Both solvers share the vertex-centered finite-volume discretization with
zero Dirichlet trace.  The fine solver assembles the oscillating flux
K^{mn}(x) = D^eps(x) g^{nm}(x) sqrt|G(x)|; the homogenized solver uses
K^{nm}(x) = sum_a B^n_a(x) g^{am}(x) sqrt|G(x)| with B from the cell
module.  The sweep harness solves both per eps, reconstructs the
corrector, and tabulates the error columns.
"""

from __future__ import annotations

import itertools
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import expr as ex
from .cell import (CellSolution, CoefficientField, EffectiveTensor,
                   assemble_effective, solve_cell)
from .errors import AlignmentError, ConfigurationError, GeometryError
from .fieldgrid import (GridFunction, grad_M, make_grid, metric_pairing, norms)
from .geometry import Atlas, MetricField, _min_eig, single_chart_atlas, validate_uc
from .linalg import cg
from .stencils import DirichletOperator, dirichlet_rhs
from .unfolding import ALIGN_TOL, UnfoldConfig, ucm_residual, unfold_local

MIN_CELLS_PER_EPS = 8


@dataclass
class ProblemSpec:
    """Dirichlet problem data on one chart box.

    source may be a number, a parsed expression in x1..xn, an expression
    string, a callable on point arrays, or a GridFunction."""

    box: tuple
    metric: MetricField
    diffusion: CoefficientField
    source: object
    reaction: float = 0.0
    atlas: Atlas | None = None

    def __post_init__(self):
        self.box = tuple((float(lo), float(hi)) for lo, hi in self.box)
        n = len(self.box)
        if self.metric.n != n or self.diffusion.n != n:
            raise ConfigurationError(
                "box, metric, and coefficient dimensions disagree")
        if not self.reaction >= 0:
            raise ConfigurationError(
                f"reaction coefficient must be nonnegative, got {self.reaction}")
        if self.atlas is None:
            self.atlas = single_chart_atlas(self.box,
                                            cell_edge=self.diffusion.cell_edge)

    @property
    def n(self):
        return len(self.box)


@dataclass
class SolveResult:
    """Discrete solution with its algebraic and energetic diagnostics."""

    u: GridFunction
    iterations: int
    residual: float
    energy: float          # discrete bilinear form a(u, u)
    load: float            # discrete pairing of the source with u
    eps: float | None = None

    @property
    def energy_gap(self):
        """Relative defect of a(u, u) = (f, u); rounding plus CG residual."""
        scale = max(abs(self.energy), abs(self.load), 1e-300)
        return abs(self.energy - self.load) / scale


def _sample_scalar(source, pts, n):
    if isinstance(source, GridFunction):
        if source.values.shape != pts.shape[:-1]:
            raise ConfigurationError(
                f"source grid shape {source.values.shape} does not match "
                f"the solver grid {pts.shape[:-1]}")
        vals = source.values
    elif isinstance(source, str):
        node = ex.parse(source, ex.default_variables(n, "x"))
        names = ex.default_variables(n, "x")
        vals = ex.eval_node(node, {names[i]: pts[..., i] for i in range(n)})
    elif isinstance(source, (ex.Num, ex.Var, ex.Neg, ex.BinOp, ex.Call)):
        names = ex.default_variables(n, "x")
        vals = ex.eval_node(source, {names[i]: pts[..., i] for i in range(n)})
    elif callable(source):
        vals = source(pts)
    else:
        vals = float(source)
    out = np.broadcast_to(np.asarray(vals, dtype=float), pts.shape[:-1])
    if not np.all(np.isfinite(out)):
        raise ConfigurationError("source field is not finite on the grid")
    return np.array(out)


def _validate_alignment(p: ProblemSpec, eps, h):
    """Cell period eps*edge an integer multiple (>= 8) of h on every
    axis, box anchored on the cell lattice, atlas compatible with eps."""
    h = np.broadcast_to(np.asarray(h, dtype=float), (p.n,))
    edge = p.diffusion.cell_edge
    cell_lo = p.diffusion.cell_lo
    ncs = []
    for ax in range(p.n):
        period = eps * edge[ax]
        ratio = period / h[ax]
        nc = round(ratio)
        if abs(ratio - nc) > ALIGN_TOL * max(1.0, ratio):
            raise AlignmentError(
                f"axis {ax}: cell period over h = {ratio!r} is not an integer",
                axis=ax)
        if nc < MIN_CELLS_PER_EPS:
            raise AlignmentError(
                f"axis {ax}: {nc} samples per cell underresolve the "
                f"microstructure (need >= {MIN_CELLS_PER_EPS})", axis=ax)
        anchor = (p.box[ax][0] / eps - cell_lo[ax]) / edge[ax]
        if abs(anchor - round(anchor)) > ALIGN_TOL:
            raise AlignmentError(
                f"axis {ax}: box anchor {p.box[ax][0]!r} off the cell lattice",
                axis=ax)
        ncs.append(nc)
    report = validate_uc(p.atlas, eps)
    if not report.ok:
        raise GeometryError("atlas incompatible with eps=%r: %s"
                            % (eps, "; ".join(report.messages)))
    return ncs


def oscillating_coefficient(D: CoefficientField, eps, lo, h, shape) -> np.ndarray:
    """D at the cell coordinate of each grid point, by exact index
    arithmetic.

    With eps*edge = nc*h and lo on the cell lattice the cell coordinate
    of point i is cell_lo + (i mod nc)/nc * edge exactly, so unfolding
    these samples returns bit-identical cell values in every full cell."""
    n = len(shape)
    h = np.broadcast_to(np.asarray(h, dtype=float), (n,))
    axes = []
    for ax in range(n):
        nc = round(eps * D.cell_edge[ax] / h[ax])
        axes.append((np.arange(shape[ax]) % nc) / nc)
    y = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    pts = D.cell_lo + y * D.cell_edge
    return np.asarray(D(pts), dtype=float)


def oscillating_value(D: CoefficientField, eps, points) -> np.ndarray:
    """D at the cell coordinate of arbitrary points (direct evaluation,
    not index-exact); the reference for cross-atlas agreement checks."""
    pts = np.asarray(points, dtype=float)
    y = D.cell_lo + np.mod(pts / eps - D.cell_lo, D.cell_edge)
    return np.asarray(D(y), dtype=float)


def _solve_dirichlet(p, lo, h, shape, pts, k_matrix, sq, tol, maxiter, eps=None):
    mass = p.reaction * sq if p.reaction > 0 else None
    op = DirichletOperator(k_matrix, h, mass=mass)
    f_vals = _sample_scalar(p.source, pts, p.n)
    b = dirichlet_rhs(f_vals * sq)
    u_vals, iters, rel = cg(op, b, tol=tol, maxiter=maxiter)
    vol = float(np.prod(h))
    u = GridFunction("main", lo, h, u_vals, "dirichlet")
    return SolveResult(u=u, iterations=iters, residual=rel,
                       energy=op.energy(u_vals, u_vals) * vol,
                       load=float(np.sum(b * u_vals)) * vol,
                       eps=eps)


def _grid_pieces(p, h):
    lo, hh, shape = make_grid(p.box, h, kind="dirichlet")
    probe = GridFunction("main", lo, hh, np.zeros(shape), "dirichlet")
    pts = probe.points()
    ginv = p.metric.inverse(pts)
    sq = p.metric.sqrt_det(pts)
    return lo, hh, shape, pts, ginv, sq


def solve_fine(p: ProblemSpec, eps, h, tol=1e-10, maxiter=None) -> SolveResult:
    """Solve the oscillating-coefficient problem at cell size eps."""
    _validate_alignment(p, eps, h)
    lo, hh, shape, pts, ginv, sq = _grid_pieces(p, h)
    d_eps = oscillating_coefficient(p.diffusion, eps, lo, hh, shape)
    k = d_eps[..., None, None] * ginv * sq[..., None, None]
    return _solve_dirichlet(p, lo, hh, shape, pts, k, sq, tol, maxiter, eps=eps)


def _b_at(b_field, pts, n):
    """Effective tensor B as an array at the given points."""
    if isinstance(b_field, EffectiveTensor):
        return np.broadcast_to(b_field.B, pts.shape[:-1] + (n, n))
    if isinstance(b_field, np.ndarray) and b_field.shape == (n, n):
        return np.broadcast_to(b_field, pts.shape[:-1] + (n, n))
    if isinstance(b_field, (list, tuple)):
        xs = np.array([float(np.atleast_1d(x)[0]) for x, _t in b_field])
        if np.any(np.diff(xs) <= 0):
            raise ConfigurationError("effective tensor samples must have "
                                     "strictly increasing first coordinates")
        mats = np.array([t.B for _x, t in b_field])
        out = np.empty(pts.shape[:-1] + (n, n))
        for i in range(n):
            for j in range(n):
                out[..., i, j] = np.interp(pts[..., 0], xs, mats[:, i, j])
        return out
    if callable(b_field):
        out = np.asarray(b_field(pts), dtype=float)
        if out.shape != pts.shape[:-1] + (n, n):
            raise ConfigurationError(
                f"effective tensor callable returned shape {out.shape}")
        return out
    raise ConfigurationError(f"unsupported effective tensor field {type(b_field)!r}")


def solve_homogenized(p: ProblemSpec, b_field, h, tol=1e-10, maxiter=None) -> SolveResult:
    """Solve the limit problem with effective tensor field B(x).

    b_field: EffectiveTensor, bare (n, n) array, list of (x, tensor)
    samples interpolated along the first coordinate, or a callable on
    point arrays."""
    lo, hh, shape, pts, ginv, sq = _grid_pieces(p, h)
    n = p.n
    b = _b_at(b_field, pts, n)
    gm = p.metric.matrix(pts)
    bt = np.einsum("...ij,...jk->...ik", gm, b)
    scale = float(np.max(np.abs(bt)))
    gap = float(np.max(np.abs(bt - np.swapaxes(bt, -1, -2))))
    if gap > 1e-8 * max(scale, 1e-300):
        raise GeometryError(
            f"lowered effective tensor asymmetric (gap {gap:.3e}); "
            "check the cell-problem output")
    bt_sym = 0.5 * (bt + np.swapaxes(bt, -1, -2))
    if float(np.min(_min_eig(bt_sym, n))) <= 0.0:
        raise GeometryError("effective tensor is not positive definite "
                            "at some grid sample")
    k = np.einsum("...na,...am->...nm", b, ginv) * sq[..., None, None]
    k = 0.5 * (k + np.swapaxes(k, -1, -2))
    return _solve_dirichlet(p, lo, hh, shape, pts, k, sq, tol, maxiter)


def _periodic_interp(values, y_rel):
    """Multilinear periodic interpolation of cell-center samples.

    values has shape (m,)*n; y_rel has shape (..., n) with entries taken
    relative to the cell box (in [0, 1))."""
    n = values.ndim
    y = np.atleast_1d(np.asarray(y_rel, dtype=float))
    if y.shape[-1] != n:
        raise ConfigurationError("interpolation point dimension mismatch")
    shp = values.shape
    out = np.zeros(y.shape[:-1])
    rel = np.empty_like(y)
    for ax in range(n):
        rel[..., ax] = y[..., ax] * shp[ax] - 0.5
    base = np.floor(rel).astype(int)
    frac = rel - base
    for corner in itertools.product((0, 1), repeat=n):
        w = np.ones(y.shape[:-1])
        idx = []
        for ax in range(n):
            w = w * (frac[..., ax] if corner[ax] else 1.0 - frac[..., ax])
            idx.append((base[..., ax] + corner[ax]) % shp[ax])
        out = out + w * values[tuple(idx)]
    return out


@dataclass
class TwoScaleCorrector:
    """u-hat(x, y) = sum_i w_i(y) (grad_M u(x))^i for one cell solution."""

    u: GridFunction
    sol: CellSolution
    metric: MetricField
    grad: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.grad is None:
            self.grad = grad_M(self.u, self.metric).components

    @property
    def n(self):
        return self.u.n

    def _w_at(self, y_rel):
        return np.stack([_periodic_interp(self.sol.w[i], y_rel)
                         for i in range(self.n)], axis=-1)

    def at_y(self, y) -> GridFunction:
        """u-hat(., y) for one cell point y (absolute cell coordinates)."""
        y = np.asarray(y, dtype=float)
        rel = (y - self.sol.cell_lo) / self.sol.cell_edge
        w = self._w_at(rel)
        vals = np.einsum("...i,i->...", self.grad, w.reshape(-1))
        return GridFunction(self.u.chart_id, self.u.lo, self.u.h, vals, "free")

    def realized(self, eps) -> GridFunction:
        """u-hat(x, {x/eps}) on the macro grid, cell coordinates taken by
        the same index arithmetic as the oscillating coefficient."""
        f = self.u
        axes = []
        for ax in range(self.n):
            ratio = eps * self.sol.cell_edge[ax] / f.h[ax]
            nc = round(ratio)
            if abs(ratio - nc) > ALIGN_TOL * max(1.0, ratio):
                raise AlignmentError(
                    f"axis {ax}: cell period over h not an integer for the "
                    "corrector", axis=ax)
            axes.append((np.arange(f.shape[ax]) % nc) / nc)
        y = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        w = self._w_at(y)
        vals = np.einsum("...i,...i->...", self.grad, w)
        return GridFunction(f.chart_id, f.lo, f.h, vals, "free")

    def mean_zero_gap(self) -> float:
        """Max over x of |mean_y u-hat| at cell-center samples; zero to
        rounding because each w_i carries the mean-zero gauge."""
        means = np.array([float(np.mean(self.sol.w[i])) for i in range(self.n)])
        return float(np.max(np.abs(self.grad @ means)))


def reconstruct_corrector(u: GridFunction, cell_solution: CellSolution,
                          metric: MetricField) -> TwoScaleCorrector:
    if cell_solution.n != u.n:
        raise ConfigurationError("cell solution dimension mismatch")
    return TwoScaleCorrector(u=u, sol=cell_solution, metric=metric)


CSV_COLUMNS = ("eps", "l2_err", "unfolded_l2_err", "corrector_h1_err",
               "ucm_residual", "iterations", "seconds")


@dataclass
class ConvergenceTable:
    """Per-eps error columns of one sweep, ordered as given."""

    eps: list
    l2_err: list
    unfolded_l2_err: list
    corrector_h1_err: list
    ucm_residual: list
    iterations: list
    seconds: list
    fine_l2: list
    fine_h1: list

    @property
    def monotone(self) -> dict:
        def strict(xs):
            return all(b < a for a, b in zip(xs, xs[1:]))

        return {
            "l2_err": strict(self.l2_err),
            "unfolded_l2_err": strict(self.unfolded_l2_err),
            "corrector_h1_err": strict(self.corrector_h1_err),
            "ucm_residual": strict(self.ucm_residual),
        }

    def rows(self, include_seconds=True):
        cols = CSV_COLUMNS if include_seconds else CSV_COLUMNS[:-1]
        out = []
        for i in range(len(self.eps)):
            row = {
                "eps": self.eps[i],
                "l2_err": self.l2_err[i],
                "unfolded_l2_err": self.unfolded_l2_err[i],
                "corrector_h1_err": self.corrector_h1_err[i],
                "ucm_residual": self.ucm_residual[i],
                "iterations": self.iterations[i],
                "seconds": self.seconds[i],
            }
            out.append({k: row[k] for k in cols})
        return out

    def to_csv(self, path, include_seconds=True):
        # wall time is the one volatile column; reproducible artifacts
        # drop it here and record timings in the run manifest instead
        from .report import write_csv

        cols = CSV_COLUMNS if include_seconds else CSV_COLUMNS[:-1]
        rows = [[r[c] for c in cols] for r in self.rows(include_seconds)]
        write_csv(path, cols, rows)


def reference_effective(p: ProblemSpec, n_cells=None, tol=1e-10):
    """Cell solution and effective tensor(s) for the sweep reference.

    Returns (b_field, cell_solution).  With an x-independent metric the
    field is a single tensor; otherwise tensors are sampled along the
    first coordinate and interpolated (sampling refined until the change
    is negligible), and the corrector uses the mid-box cell solution."""
    n = p.n
    if n_cells is None:
        n_cells = 256 if n == 1 else 64
    mid = np.array([(lo + hi) / 2.0 for lo, hi in p.box])
    g_mid = p.metric.matrix(mid)
    sol = solve_cell(p.diffusion, g_mid, n_cells, tol=tol, x=mid)
    probe = np.stack([np.array([lo for lo, _ in p.box]),
                      mid,
                      np.array([hi for _, hi in p.box])])
    gs = p.metric.matrix(probe)
    if np.max(np.abs(gs - g_mid)) <= 1e-12 * max(1.0, float(np.max(np.abs(g_mid)))):
        return assemble_effective(p.diffusion, sol), sol

    lo0, hi0 = p.box[0]

    def sampled(k):
        xs = np.linspace(lo0, hi0, k)
        out = []
        for xv in xs:
            x = mid.copy()
            x[0] = xv
            s = solve_cell(p.diffusion, p.metric.matrix(x), n_cells, tol=tol, x=x)
            out.append((xv, assemble_effective(p.diffusion, s)))
        return out

    prev = sampled(5)
    for k in (9, 17, 33):
        cur = sampled(k)
        xs_f = np.linspace(lo0, hi0, 101)
        a = np.stack([_b_interp_1d(prev, xv, n) for xv in xs_f])
        b = np.stack([_b_interp_1d(cur, xv, n) for xv in xs_f])
        scale = max(float(np.max(np.abs(b))), 1e-300)
        if float(np.max(np.abs(a - b))) <= 1e-8 * scale:
            return cur, sol
        prev = cur
    return prev, sol


def _b_interp_1d(samples, xv, n):
    xs = np.array([x for x, _t in samples])
    mats = np.array([t.B for _x, t in samples])
    out = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            out[i, j] = np.interp(xv, xs, mats[:, i, j])
    return out


def _sqrt_det_field(metric, f: GridFunction) -> GridFunction:
    return GridFunction(f.chart_id, f.lo, f.h, metric.sqrt_det(f.points()), f.kind)


def unfolded_l2_gap(u_eps: GridFunction, u: GridFunction, metric: MetricField,
                    cfg: UnfoldConfig) -> float:
    """L2(M x Y) distance of the unfolded solutions over full cells."""
    tue = unfold_local(u_eps, cfg)
    tu = unfold_local(u, cfg)
    tsq = unfold_local(_sqrt_det_field(metric, u_eps), cfg)
    w = (cfg.eps / cfg.cells_per_eps) ** u.n
    return float(np.sqrt(np.sum((tue.values - tu.values) ** 2 * tsq.values) * w))


def convergence_study(p: ProblemSpec, eps_list, h_rule=32, n_cells=None,
                      tol=1e-10, threads=None) -> ConvergenceTable:
    """Sweep the fine solver over eps and tabulate errors against the
    homogenized limit.

    h_rule: integer cells-per-eps (h = eps/h_rule) or a callable
    eps -> h.  Solves for distinct eps run in a thread pool; the table
    order follows eps_list."""
    eps_list = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ConfigurationError("eps sweep must be strictly decreasing")
    b_field, sol = reference_effective(p, n_cells=n_cells, tol=tol)

    def one(eps):
        t0 = time.perf_counter()
        h = h_rule(eps) if callable(h_rule) else eps / int(h_rule)
        fine = solve_fine(p, eps, h, tol=tol)
        hom = solve_homogenized(p, b_field, h, tol=tol)
        diff = GridFunction(fine.u.chart_id, fine.u.lo, fine.u.h,
                            fine.u.values - hom.u.values, "dirichlet")
        l2 = norms(diff, p.metric)["l2"]
        cfg = UnfoldConfig(eps, round(eps / float(np.min(fine.u.h))))
        unf = unfolded_l2_gap(fine.u, hom.u, p.metric, cfg)
        corr = reconstruct_corrector(hom.u, sol, p.metric)
        u_hat = corr.realized(eps)
        cerr = GridFunction(fine.u.chart_id, fine.u.lo, fine.u.h,
                            fine.u.values - hom.u.values - eps * u_hat.values,
                            "free")
        h1 = norms(cerr, p.metric)["h1_semi"]
        grad = grad_M(fine.u, p.metric)
        dvals = oscillating_coefficient(p.diffusion, eps, fine.u.lo, fine.u.h,
                                        fine.u.shape)
        en = metric_pairing(grad, grad, p.metric)
        en = GridFunction(en.chart_id, en.lo, en.h, dvals * en.values, en.kind)
        r = ucm_residual(en, p.metric, p.atlas, cfg)
        fn = norms(fine.u, p.metric)
        return {
            "eps": eps, "l2_err": l2, "unfolded_l2_err": unf,
            "corrector_h1_err": h1, "ucm_residual": r,
            "iterations": fine.iterations,
            "seconds": time.perf_counter() - t0,
            "fine_l2": fn["l2"], "fine_h1": fn["h1_semi"],
        }

    if threads is not None and threads == 1:
        results = [one(e) for e in eps_list]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, eps_list))
    return ConvergenceTable(
        eps=[r["eps"] for r in results],
        l2_err=[r["l2_err"] for r in results],
        unfolded_l2_err=[r["unfolded_l2_err"] for r in results],
        corrector_h1_err=[r["corrector_h1_err"] for r in results],
        ucm_residual=[r["ucm_residual"] for r in results],
        iterations=[r["iterations"] for r in results],
        seconds=[r["seconds"] for r in results],
        fine_l2=[r["fine_l2"] for r in results],
        fine_h1=[r["fine_h1"] for r in results],
    )


def apriori_bound(p: ProblemSpec, samples=65) -> dict:
    """Uniform energy bound on the sweep from the weak form.

    With d0 the coefficient floor, testing the weak form with u gives
    d0 |grad u|^2 <= (f, u) <= |f| C_P,g |grad u|, so |u| + |grad u|
    <= (C_P,g + C_P,g^2) |f| / d0, all norms in the metric volume.  The
    metric Poincare constant folds the box constant
    C_P = 1/(pi sqrt(sum 1/L_i^2)) with the sampled metric extremes."""
    n = p.n
    lengths = np.array([hi - lo for lo, hi in p.box])
    c_p = 1.0 / (np.pi * np.sqrt(np.sum(1.0 / lengths ** 2)))
    lo, hh, shape = make_grid(p.box, [L / (samples - 1) for L in lengths],
                              kind="free")
    probe = GridFunction("main", lo, hh, np.zeros(shape), "free")
    pts = probe.points()
    g = p.metric.matrix(pts)
    sq = p.metric.sqrt_det(pts)
    lam_min = _min_eig(g, n)
    tr = np.trace(g, axis1=-2, axis2=-1)
    lam_max = tr - lam_min if n > 1 else lam_min
    ratio = float(np.max(sq) / np.min(sq))
    c_pg = float(c_p * np.sqrt(ratio * np.max(lam_max)))
    f_vals = _sample_scalar(p.source, pts, n)
    from .fieldgrid import quadrature_weights

    w = quadrature_weights(probe)
    f_norm = float(np.sqrt(np.sum(w * f_vals ** 2 * sq)))
    d0 = p.diffusion.d0
    if d0 is None:
        p.diffusion.center_samples(128 if n == 1 else 64)
        d0 = p.diffusion.d0
    constant = f_norm * (c_pg + c_pg ** 2) / d0
    return {"constant": constant, "poincare": float(c_p),
            "poincare_metric": c_pg, "source_norm": f_norm, "d0": d0}


def check_apriori(p: ProblemSpec, table: ConvergenceTable) -> dict:
    """Assert |u^eps| + |grad u^eps| <= C across the sweep."""
    bound = apriori_bound(p)
    c = bound["constant"]
    rows = []
    ok = True
    for i, eps in enumerate(table.eps):
        total = table.fine_l2[i] + table.fine_h1[i]
        rows.append({"eps": eps, "l2": table.fine_l2[i],
                     "h1_semi": table.fine_h1[i], "total": total,
                     "bounded": total <= c})
        ok = ok and total <= c
    return {"constant": c, "rows": rows, "ok": ok, "details": bound}
