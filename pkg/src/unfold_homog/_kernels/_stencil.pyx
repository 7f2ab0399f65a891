# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled stencil kernels; numerically identical to the numpy twin
(_reference) up to floating point association order."""

import numpy as np


def apply_periodic_1d(double[::1] u, double[::1] cface, double inv_h2,
                      double[::1] out):
    cdef Py_ssize_t n = u.shape[0]
    cdef Py_ssize_t i, im, ip
    for i in range(n):
        im = i - 1 if i > 0 else n - 1
        ip = i + 1 if i < n - 1 else 0
        out[i] = (cface[im] * (u[i] - u[im]) - cface[i] * (u[ip] - u[i])) * inv_h2
    return np.asarray(out)


def apply_periodic_2d(double[:, ::1] u, double[:, ::1] cxx, double[:, ::1] cyy,
                      cq_obj, double inv_hx2, double inv_hy2,
                      double inv_4hxhy, double[:, ::1] out):
    cdef Py_ssize_t nx = u.shape[0], ny = u.shape[1]
    cdef Py_ssize_t i, j, im, ip, jm, jp
    cdef double dx_, dy_, gx, gy
    cdef double[:, ::1] cq
    for i in range(nx):
        im = i - 1 if i > 0 else nx - 1
        ip = i + 1 if i < nx - 1 else 0
        for j in range(ny):
            jm = j - 1 if j > 0 else ny - 1
            jp = j + 1 if j < ny - 1 else 0
            out[i, j] = (cxx[im, j] * (u[i, j] - u[im, j])
                         - cxx[i, j] * (u[ip, j] - u[i, j])) * inv_hx2 \
                      + (cyy[i, jm] * (u[i, j] - u[i, jm])
                         - cyy[i, j] * (u[i, jp] - u[i, j])) * inv_hy2
    if cq_obj is not None:
        cq = cq_obj
        for i in range(nx):
            ip = i + 1 if i < nx - 1 else 0
            for j in range(ny):
                jp = j + 1 if j < ny - 1 else 0
                dx_ = u[ip, j] + u[ip, jp] - u[i, j] - u[i, jp]
                dy_ = u[i, jp] + u[ip, jp] - u[i, j] - u[ip, j]
                gx = cq[i, j] * dy_
                gy = cq[i, j] * dx_
                out[i, j] += inv_4hxhy * (-gx - gy)
                out[ip, j] += inv_4hxhy * (gx - gy)
                out[i, jp] += inv_4hxhy * (-gx + gy)
                out[ip, jp] += inv_4hxhy * (gx + gy)
    return np.asarray(out)


def apply_dirichlet_1d(double[::1] u, double[::1] cface, double inv_h2,
                       double[::1] out):
    cdef Py_ssize_t n = u.shape[0]
    cdef Py_ssize_t i
    out[0] = 0.0
    out[n - 1] = 0.0
    for i in range(1, n - 1):
        out[i] = (cface[i - 1] * (u[i] - u[i - 1])
                  - cface[i] * (u[i + 1] - u[i])) * inv_h2
    return np.asarray(out)


def apply_dirichlet_2d(double[:, ::1] u, double[:, ::1] cxx, double[:, ::1] cyy,
                       cq_obj, double inv_hx2, double inv_hy2,
                       double inv_4hxhy, double[:, ::1] out):
    cdef Py_ssize_t px = u.shape[0], py = u.shape[1]
    cdef Py_ssize_t i, j
    cdef double dx_, dy_, gx, gy
    cdef double[:, ::1] cq
    for i in range(px):
        for j in range(py):
            out[i, j] = 0.0
    for i in range(1, px - 1):
        for j in range(1, py - 1):
            out[i, j] = (cxx[i - 1, j] * (u[i, j] - u[i - 1, j])
                         - cxx[i, j] * (u[i + 1, j] - u[i, j])) * inv_hx2 \
                      + (cyy[i, j - 1] * (u[i, j] - u[i, j - 1])
                         - cyy[i, j] * (u[i, j + 1] - u[i, j])) * inv_hy2
    if cq_obj is not None:
        cq = cq_obj
        # corner (i+1/2, j+1/2) touches vertices (i..i+1, j..j+1); scatter
        # only lands on interior vertices because the boundary ring is
        # re-zeroed below.
        for i in range(px - 1):
            for j in range(py - 1):
                dx_ = u[i + 1, j] + u[i + 1, j + 1] - u[i, j] - u[i, j + 1]
                dy_ = u[i, j + 1] + u[i + 1, j + 1] - u[i, j] - u[i + 1, j]
                gx = cq[i, j] * dy_
                gy = cq[i, j] * dx_
                out[i, j] += inv_4hxhy * (-gx - gy)
                out[i + 1, j] += inv_4hxhy * (gx - gy)
                out[i, j + 1] += inv_4hxhy * (-gx + gy)
                out[i + 1, j + 1] += inv_4hxhy * (gx + gy)
        for i in range(px):
            out[i, 0] = 0.0
            out[i, py - 1] = 0.0
        for j in range(py):
            out[0, j] = 0.0
            out[px - 1, j] = 0.0
    return np.asarray(out)
