"""Stencil kernels: backend parity, symmetry, and exact 1D oracles."""

import math
import os
import subprocess
import sys

import numpy as np
import pytest

from unfold_homog._kernels import BACKEND, available_backends, backend_module

ref = backend_module("numpy")
HAVE_COMPILED = "compiled" in available_backends()
needs_compiled = pytest.mark.skipif(not HAVE_COMPILED, reason="compiled backend not built")

BACKENDS = [backend_module(name) for name in available_backends()]


def rng():
    return np.random.default_rng(20240817)


# ---------------------------------------------------------------- parity

@needs_compiled
def test_periodic_1d_parity():
    r = rng()
    m = 64
    u = r.standard_normal(m)
    c = r.uniform(0.5, 2.0, m)
    fast = backend_module("compiled")
    a = ref.apply_periodic_1d(u, c, 16.0, np.empty(m))
    b = fast.apply_periodic_1d(u, c, 16.0, np.empty(m))
    np.testing.assert_allclose(a, b, atol=1e-13)


@needs_compiled
def test_periodic_2d_parity():
    r = rng()
    m, n = 32, 24
    u = r.standard_normal((m, n))
    cxx = r.uniform(0.5, 2.0, (m, n))
    cyy = r.uniform(0.5, 2.0, (m, n))
    cq = r.uniform(-0.2, 0.2, (m, n))
    fast = backend_module("compiled")
    a = ref.apply_periodic_2d(u, cxx, cyy, cq, 4.0, 9.0, 1.5, np.empty((m, n)))
    b = fast.apply_periodic_2d(u, cxx, cyy, cq, 4.0, 9.0, 1.5, np.empty((m, n)))
    np.testing.assert_allclose(a, b, atol=1e-13)
    a0 = ref.apply_periodic_2d(u, cxx, cyy, None, 4.0, 9.0, 1.5, np.empty((m, n)))
    b0 = fast.apply_periodic_2d(u, cxx, cyy, None, 4.0, 9.0, 1.5, np.empty((m, n)))
    np.testing.assert_allclose(a0, b0, atol=1e-13)


@needs_compiled
def test_dirichlet_1d_parity():
    r = rng()
    m = 65
    u = r.standard_normal(m)
    c = r.uniform(0.5, 2.0, m - 1)
    fast = backend_module("compiled")
    a = ref.apply_dirichlet_1d(u, c, 25.0, np.empty(m))
    b = fast.apply_dirichlet_1d(u, c, 25.0, np.empty(m))
    np.testing.assert_allclose(a, b, atol=1e-13)


@needs_compiled
def test_dirichlet_2d_parity():
    r = rng()
    m, n = 33, 21
    u = r.standard_normal((m, n))
    cxx = r.uniform(0.5, 2.0, (m - 1, n))
    cyy = r.uniform(0.5, 2.0, (m, n - 1))
    cq = r.uniform(-0.2, 0.2, (m - 1, n - 1))
    fast = backend_module("compiled")
    a = ref.apply_dirichlet_2d(u, cxx, cyy, cq, 4.0, 9.0, 1.5, np.empty((m, n)))
    b = fast.apply_dirichlet_2d(u, cxx, cyy, cq, 4.0, 9.0, 1.5, np.empty((m, n)))
    np.testing.assert_allclose(a, b, atol=1e-13)
    a0 = ref.apply_dirichlet_2d(u, cxx, cyy, None, 4.0, 9.0, 1.5, np.empty((m, n)))
    b0 = fast.apply_dirichlet_2d(u, cxx, cyy, None, 4.0, 9.0, 1.5, np.empty((m, n)))
    np.testing.assert_allclose(a0, b0, atol=1e-13)


# ---------------------------------------------------------------- oracles

def test_periodic_1d_fourier_mode():
    # constant coefficient: sin(2*pi*x) is an exact eigenvector of the
    # three point stencil with eigenvalue 2(1-cos(2*pi*h))/h^2
    m = 32
    h = 1.0 / m
    x = np.arange(m) * h
    u = np.sin(2 * math.pi * x)
    lam = 2.0 * (1.0 - math.cos(2 * math.pi * h)) / h ** 2
    for mod in BACKENDS:
        out = mod.apply_periodic_1d(u, np.ones(m), 1.0 / h ** 2, np.empty(m))
        np.testing.assert_allclose(out, lam * u, atol=1e-10)


def test_periodic_annihilates_constants():
    r = rng()
    m, n = 16, 12
    c1 = r.uniform(0.5, 2.0, m)
    cxx = r.uniform(0.5, 2.0, (m, n))
    cyy = r.uniform(0.5, 2.0, (m, n))
    cq = r.uniform(-0.2, 0.2, (m, n))
    for mod in BACKENDS:
        out1 = mod.apply_periodic_1d(np.full(m, 3.0), c1, 9.0, np.empty(m))
        np.testing.assert_allclose(out1, 0.0, atol=1e-12)
        out2 = mod.apply_periodic_2d(
            np.full((m, n), 3.0), cxx, cyy, cq, 4.0, 9.0, 1.5, np.empty((m, n)))
        np.testing.assert_allclose(out2, 0.0, atol=1e-12)


def test_dirichlet_1d_quadratic_exact():
    # u = x(1-x), c = 1: -u'' = 2 and the central stencil is exact
    m = 17
    h = 1.0 / (m - 1)
    x = np.arange(m) * h
    u = x * (1.0 - x)
    for mod in BACKENDS:
        out = mod.apply_dirichlet_1d(u, np.ones(m - 1), 1.0 / h ** 2, np.empty(m))
        np.testing.assert_allclose(out[1:-1], 2.0, atol=1e-11)
        assert out[0] == 0.0 and out[-1] == 0.0


def test_dirichlet_2d_boundary_rows_zero():
    r = rng()
    m, n = 9, 8
    u = r.standard_normal((m, n))
    cxx = r.uniform(0.5, 2.0, (m - 1, n))
    cyy = r.uniform(0.5, 2.0, (m, n - 1))
    cq = r.uniform(-0.2, 0.2, (m - 1, n - 1))
    for mod in BACKENDS:
        out = mod.apply_dirichlet_2d(u, cxx, cyy, cq, 1.0, 1.0, 1.0, np.empty((m, n)))
        assert np.all(out[0] == 0.0) and np.all(out[-1] == 0.0)
        assert np.all(out[:, 0] == 0.0) and np.all(out[:, -1] == 0.0)


# ---------------------------------------------------------------- symmetry

def _matrix_1d(apply_fn, m, args):
    cols = []
    for j in range(m):
        e = np.zeros(m)
        e[j] = 1.0
        cols.append(apply_fn(e, *args, np.empty(m)).copy())
    return np.stack(cols, axis=1)


def _matrix_2d(apply_fn, shape, args):
    m, n = shape
    cols = []
    for j in range(m * n):
        e = np.zeros(m * n)
        e[j] = 1.0
        out = apply_fn(e.reshape(m, n), *args, np.empty((m, n)))
        cols.append(out.ravel().copy())
    return np.stack(cols, axis=1)


def test_periodic_1d_operator_symmetric():
    r = rng()
    m = 24
    c = r.uniform(0.5, 2.0, m)
    for mod in BACKENDS:
        a = _matrix_1d(mod.apply_periodic_1d, m, (c, 1.0))
        np.testing.assert_allclose(a, a.T, atol=1e-13)
        lam = np.linalg.eigvalsh(a)
        assert lam[0] > -1e-12  # PSD with the constant in the kernel


def test_periodic_2d_operator_symmetric_with_cross():
    r = rng()
    m, n = 6, 5
    cxx = r.uniform(0.5, 2.0, (m, n))
    cyy = r.uniform(0.5, 2.0, (m, n))
    cq = r.uniform(-0.2, 0.2, (m, n))
    for mod in BACKENDS:
        a = _matrix_2d(mod.apply_periodic_2d, (m, n), (cxx, cyy, cq, 1.0, 1.0, 0.25))
        np.testing.assert_allclose(a, a.T, atol=1e-13)


def test_dirichlet_operators_spd_on_interior():
    r = rng()
    m = 13
    c = r.uniform(0.5, 2.0, m - 1)
    for mod in BACKENDS:
        a = _matrix_1d(mod.apply_dirichlet_1d, m, (c, 1.0))
        inner = a[1:-1, 1:-1]
        np.testing.assert_allclose(inner, inner.T, atol=1e-13)
        assert np.linalg.eigvalsh(inner)[0] > 0

    m, n = 7, 6
    cxx = r.uniform(0.5, 2.0, (m - 1, n))
    cyy = r.uniform(0.5, 2.0, (m, n - 1))
    cq = r.uniform(-0.1, 0.1, (m - 1, n - 1))
    mask = np.zeros((m, n), dtype=bool)
    mask[1:-1, 1:-1] = True
    idx = np.flatnonzero(mask.ravel())
    for mod in BACKENDS:
        a = _matrix_2d(mod.apply_dirichlet_2d, (m, n), (cxx, cyy, cq, 1.0, 1.0, 0.25))
        inner = a[np.ix_(idx, idx)]
        np.testing.assert_allclose(inner, inner.T, atol=1e-13)
        assert np.linalg.eigvalsh(inner)[0] > 0


# ---------------------------------------------------------------- selection

def test_backend_module_rejects_unknown():
    with pytest.raises(ValueError):
        backend_module("bogus")


def test_active_backend_is_listed():
    names = available_backends()
    assert "numpy" in names
    assert BACKEND in names


def test_env_forcing_unavailable_backend_fails():
    code = "import unfold_homog._kernels"
    env = dict(os.environ, UNFOLD_HOMOG_KERNELS="not-a-backend")
    proc = subprocess.run(
        [sys.executable, "-c", code], env=env, capture_output=True, text=True)
    assert proc.returncode != 0
    assert "not-a-backend" in proc.stderr


def test_env_forcing_numpy_backend():
    code = "from unfold_homog._kernels import BACKEND; print(BACKEND)"
    env = dict(os.environ, UNFOLD_HOMOG_KERNELS="numpy")
    proc = subprocess.run(
        [sys.executable, "-c", code], env=env, capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.strip() == "numpy"
