"""Conjugate gradients for the stencil operators.

Works on arrays of any shape through flattened inner products.  Periodic
problems are singular with a constant null space; project_mean=True
keeps iterates in the mean-free complement, which is the standard cure
and exact when the right-hand side is discretely mean-free.
"""

from __future__ import annotations

import numpy as np

from .errors import SolverError


def _dot(a, b):
    return float(np.vdot(a, b).real)


def cg(apply_op, b, tol=1e-10, maxiter=None, project_mean=False):
    """Solve A x = b with A SPD (or SPSD with constant null space).

    apply_op(x, out) writes A x into out and returns it.  Convergence is
    ||r||_2 <= tol * ||b||_2.  Returns (x, iterations, relative_residual);
    raises SolverError when the cap is hit.
    """
    b = np.asarray(b, dtype=float)
    if maxiter is None:
        maxiter = 50 * max(b.shape)
    x = np.zeros_like(b)
    r = b.copy()
    if project_mean:
        r -= r.mean()
    bnorm = np.sqrt(_dot(r, r))
    if bnorm == 0.0:
        return x, 0, 0.0
    p = r.copy()
    q = np.empty_like(b)
    rs = _dot(r, r)
    for k in range(1, maxiter + 1):
        apply_op(p, q)
        if project_mean:
            q -= q.mean()
        pq = _dot(p, q)
        if pq <= 0.0:
            raise SolverError(
                f"operator lost positive definiteness at iteration {k} (p.Ap = {pq:.3e})",
                residual=np.sqrt(rs) / bnorm,
                iterations=k,
            )
        alpha = rs / pq
        x += alpha * p
        r -= alpha * q
        if project_mean:
            r -= r.mean()
        rs_new = _dot(r, r)
        if np.sqrt(rs_new) <= tol * bnorm:
            if project_mean:
                x -= x.mean()
            return x, k, np.sqrt(rs_new) / bnorm
        p *= rs_new / rs
        p += r
        rs = rs_new
    raise SolverError(
        f"CG did not converge within {maxiter} iterations "
        f"(relative residual {np.sqrt(rs) / bnorm:.3e})",
        residual=np.sqrt(rs) / bnorm,
        iterations=maxiter,
    )
