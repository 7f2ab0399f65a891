"""Pure numpy stencil kernels; the fallback twin of the compiled module.

Sign convention: all kernels apply +A where A discretizes -div(c grad u)
per unit cell volume.  Face coefficient arrays hold the coefficient on
the face between index i and i+1 along the respective axis; corner
arrays hold the cross coefficient at cell corner (i+1/2, j+1/2).
"""

import numpy as np


def apply_periodic_1d(u, cface, inv_h2, out):
    cm = np.roll(cface, 1)
    um = np.roll(u, 1)
    up = np.roll(u, -1)
    out[:] = (cm * (u - um) - cface * (up - u)) * inv_h2
    return out


def apply_periodic_2d(u, cxx, cyy, cq, inv_hx2, inv_hy2, inv_4hxhy, out):
    up_x = np.roll(u, -1, 0)
    um_x = np.roll(u, 1, 0)
    up_y = np.roll(u, -1, 1)
    um_y = np.roll(u, 1, 1)
    out[:] = (np.roll(cxx, 1, 0) * (u - um_x) - cxx * (up_x - u)) * inv_hx2
    out += (np.roll(cyy, 1, 1) * (u - um_y) - cyy * (up_y - u)) * inv_hy2
    if cq is not None:
        up_xy = np.roll(up_x, -1, 1)
        dx = up_x + up_xy - u - up_y
        dy = up_y + up_xy - u - up_x
        gx = cq * dy
        gy = cq * dx
        cross = (
            np.roll(gx, (1, 1), (0, 1)) + np.roll(gx, 1, 0)
            - np.roll(gx, 1, 1) - gx
            + np.roll(gy, (1, 1), (0, 1)) + np.roll(gy, 1, 1)
            - np.roll(gy, 1, 0) - gy
        )
        out += inv_4hxhy * cross
    return out


def apply_dirichlet_1d(u, cface, inv_h2, out):
    out[0] = 0.0
    out[-1] = 0.0
    out[1:-1] = (cface[:-1] * (u[1:-1] - u[:-2]) - cface[1:] * (u[2:] - u[1:-1])) * inv_h2
    return out


def apply_dirichlet_2d(u, cxx, cyy, cq, inv_hx2, inv_hy2, inv_4hxhy, out):
    out[:] = 0.0
    out[1:-1, 1:-1] = (
        cxx[:-1, 1:-1] * (u[1:-1, 1:-1] - u[:-2, 1:-1])
        - cxx[1:, 1:-1] * (u[2:, 1:-1] - u[1:-1, 1:-1])
    ) * inv_hx2
    out[1:-1, 1:-1] += (
        cyy[1:-1, :-1] * (u[1:-1, 1:-1] - u[1:-1, :-2])
        - cyy[1:-1, 1:] * (u[1:-1, 2:] - u[1:-1, 1:-1])
    ) * inv_hy2
    if cq is not None:
        dx = (u[1:, :-1] + u[1:, 1:]) - (u[:-1, :-1] + u[:-1, 1:])
        dy = (u[:-1, 1:] + u[1:, 1:]) - (u[:-1, :-1] + u[1:, :-1])
        gx = cq * dy
        gy = cq * dx
        cross = (
            gx[:-1, :-1] + gx[:-1, 1:] - gx[1:, :-1] - gx[1:, 1:]
            + gy[:-1, :-1] + gy[1:, :-1] - gy[:-1, 1:] - gy[1:, 1:]
        )
        out[1:-1, 1:-1] += inv_4hxhy * cross
    return out
