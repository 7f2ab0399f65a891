"""Finite-volume operator assembly shared by the cell and macro solvers.

Flux form throughout: -sum_m d_m (K^{mn} d_n u).  Diagonal coefficients
live on faces (arithmetic average of the two adjacent samples); cross
coefficients live on corners (average of the four adjacent samples).
That placement keeps the assembled operator symmetric, which both CG and
the quadratic-form tensor identity rely on.

Periodic operators are cell-centered (samples at cell midpoints) and act
on mean-free vectors; Dirichlet operators are vertex-centered with the
boundary ring eliminated (iterates and residuals vanish there).
"""

from __future__ import annotations

import numpy as np

from . import _kernels as K
from .errors import ConfigurationError

CROSS_TOL = 1e-14


def _face_avg(a, axis, periodic):
    if periodic:
        return 0.5 * (a + np.roll(a, -1, axis))
    sl = [slice(None)] * a.ndim
    lo = list(sl)
    hi = list(sl)
    lo[axis] = slice(None, -1)
    hi[axis] = slice(1, None)
    return 0.5 * (a[tuple(lo)] + a[tuple(hi)])


def _corner_avg_2d(a, periodic):
    if periodic:
        return 0.25 * (a + np.roll(a, -1, 0) + np.roll(a, -1, 1)
                       + np.roll(np.roll(a, -1, 0), -1, 1))
    return 0.25 * (a[:-1, :-1] + a[1:, :-1] + a[:-1, 1:] + a[1:, 1:])


class PeriodicOperator:
    """-div(c grad .) on a periodic cell-centered grid, c = scalar field
    times a constant symmetric matrix (the frozen inverse metric)."""

    def __init__(self, d_cells, ginv, spacing):
        d_cells = np.ascontiguousarray(d_cells, dtype=float)
        ginv = np.atleast_2d(np.asarray(ginv, dtype=float))
        spacing = np.atleast_1d(np.asarray(spacing, dtype=float))
        n = d_cells.ndim
        if ginv.shape != (n, n) or spacing.shape != (n,):
            raise ConfigurationError("cell operator: shape mismatch")
        self.n = n
        self.shape = d_cells.shape
        self.spacing = spacing
        if n == 1:
            self.cface = np.ascontiguousarray(_face_avg(d_cells, 0, True) * ginv[0, 0])
            self.inv_h2 = 1.0 / spacing[0] ** 2
        elif n == 2:
            self.cxx = np.ascontiguousarray(_face_avg(d_cells, 0, True) * ginv[0, 0])
            self.cyy = np.ascontiguousarray(_face_avg(d_cells, 1, True) * ginv[1, 1])
            if abs(ginv[0, 1]) > CROSS_TOL:
                self.cq = np.ascontiguousarray(_corner_avg_2d(d_cells, True) * ginv[0, 1])
            else:
                self.cq = None
            self.inv_hx2 = 1.0 / spacing[0] ** 2
            self.inv_hy2 = 1.0 / spacing[1] ** 2
            self.inv_4hxhy = 1.0 / (4.0 * spacing[0] * spacing[1])
        else:
            raise ConfigurationError(f"cell operator supports n in (1, 2), got {n}")

    def __call__(self, u, out=None):
        if out is None:
            out = np.empty_like(u)
        if self.n == 1:
            return K.apply_periodic_1d(u, self.cface, self.inv_h2, out)
        return K.apply_periodic_2d(u, self.cxx, self.cyy, self.cq,
                                   self.inv_hx2, self.inv_hy2, self.inv_4hxhy, out)

    def energy(self, u, v) -> float:
        """Bilinear form a(u, v) per unit cell volume (times cell count)."""
        out = self(np.ascontiguousarray(v))
        return float(np.vdot(u, out).real)


def periodic_rhs(d_cells, q_components, spacing) -> np.ndarray:
    """Discrete div(D Q) on the periodic grid: face-averaged flux
    differences, which telescope to a mean-free vector."""
    d_cells = np.asarray(d_cells, dtype=float)
    spacing = np.atleast_1d(np.asarray(spacing, dtype=float))
    n = d_cells.ndim
    out = np.zeros_like(d_cells)
    for ax in range(n):
        flux = d_cells * np.asarray(q_components[..., ax], dtype=float)
        face = _face_avg(flux, ax, True)
        out += (face - np.roll(face, 1, ax)) / spacing[ax]
    return out


class DirichletOperator:
    """-div(K grad .) + m(x) on a vertex-centered grid with zero trace.

    k_matrix has shape grid_shape + (n, n) and must be symmetric; mass is
    an optional nonnegative field of grid shape (lumped reaction term).
    """

    def __init__(self, k_matrix, spacing, mass=None):
        k_matrix = np.asarray(k_matrix, dtype=float)
        spacing = np.atleast_1d(np.asarray(spacing, dtype=float))
        n = spacing.shape[0]
        if k_matrix.shape[-2:] != (n, n) or k_matrix.ndim != n + 2:
            raise ConfigurationError("macro operator: flux tensor shape mismatch")
        gap = np.max(np.abs(k_matrix - np.swapaxes(k_matrix, -1, -2)))
        if gap > 1e-12 * max(1.0, float(np.max(np.abs(k_matrix)))):
            raise ConfigurationError(f"flux tensor not symmetric (gap {gap:.3e})")
        self.n = n
        self.shape = k_matrix.shape[:-2]
        self.spacing = spacing
        if mass is not None:
            mass = np.asarray(mass, dtype=float)
            if mass.shape != self.shape:
                raise ConfigurationError("mass term shape mismatch")
            if np.any(mass < 0):
                raise ConfigurationError("mass term must be nonnegative")
            mass = mass.copy()
            _zero_boundary(mass)
            if not mass.any():
                mass = None
        self.mass = mass
        if n == 1:
            self.cface = np.ascontiguousarray(_face_avg(k_matrix[..., 0, 0], 0, False))
            self.inv_h2 = 1.0 / spacing[0] ** 2
        elif n == 2:
            self.cxx = np.ascontiguousarray(_face_avg(k_matrix[..., 0, 0], 0, False))
            self.cyy = np.ascontiguousarray(_face_avg(k_matrix[..., 1, 1], 1, False))
            kxy = k_matrix[..., 0, 1]
            if np.max(np.abs(kxy)) > CROSS_TOL:
                self.cq = np.ascontiguousarray(_corner_avg_2d(kxy, False))
            else:
                self.cq = None
            self.inv_hx2 = 1.0 / spacing[0] ** 2
            self.inv_hy2 = 1.0 / spacing[1] ** 2
            self.inv_4hxhy = 1.0 / (4.0 * spacing[0] * spacing[1])
        else:
            raise ConfigurationError(f"macro operator supports n in (1, 2), got {n}")

    def __call__(self, u, out=None):
        if out is None:
            out = np.empty_like(u)
        if self.n == 1:
            K.apply_dirichlet_1d(u, self.cface, self.inv_h2, out)
        else:
            K.apply_dirichlet_2d(u, self.cxx, self.cyy, self.cq,
                                 self.inv_hx2, self.inv_hy2, self.inv_4hxhy, out)
        if self.mass is not None:
            out += self.mass * u
        return out

    def energy(self, u, v) -> float:
        out = self(np.ascontiguousarray(v))
        return float(np.vdot(u, out).real)


def _zero_boundary(a):
    for ax in range(a.ndim):
        sl = [slice(None)] * a.ndim
        sl[ax] = 0
        a[tuple(sl)] = 0.0
        sl[ax] = -1
        a[tuple(sl)] = 0.0


def dirichlet_rhs(values) -> np.ndarray:
    """Right-hand side with the boundary ring eliminated."""
    b = np.array(values, dtype=float)
    _zero_boundary(b)
    return np.ascontiguousarray(b)
