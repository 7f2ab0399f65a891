"""Time the stencil kernels, numpy backend against the compiled one.

Usage:
    python benchmarks/bench_kernels.py [--n1d 262144] [--n2d 512] [--repeats 7]

Prints one row per kernel and grid size with the best-of-N wall time for
each available backend and the resulting speedup. The numbers are for the
raw operator application; solver-level gains are smaller because CG also
spends time in dot products and vector updates.
"""

import argparse
import time

import numpy as np

from unfold_homog._kernels import available_backends, backend_module


def _best_of(repeats, fn):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _cases(n1d, n2d, rng):
    u1 = rng.standard_normal(n1d)
    c1 = rng.uniform(1.0, 3.0, n1d)
    f1 = rng.uniform(1.0, 3.0, n1d - 1)
    o1 = np.empty_like(u1)

    u2 = rng.standard_normal((n2d, n2d))
    cxx = rng.uniform(1.0, 3.0, (n2d, n2d))
    cyy = rng.uniform(1.0, 3.0, (n2d, n2d))
    cq = rng.uniform(-0.2, 0.2, (n2d, n2d))
    dxx = rng.uniform(1.0, 3.0, (n2d - 1, n2d))
    dyy = rng.uniform(1.0, 3.0, (n2d, n2d - 1))
    dq = rng.uniform(-0.2, 0.2, (n2d - 1, n2d - 1))
    o2 = np.empty_like(u2)

    inv_h2 = float(n1d) ** 2
    ih2 = float(n2d) ** 2

    return [
        ("periodic_1d", f"{n1d}",
         lambda k: k.apply_periodic_1d(u1, c1, inv_h2, o1)),
        ("dirichlet_1d", f"{n1d}",
         lambda k: k.apply_dirichlet_1d(u1, f1, inv_h2, o1)),
        ("periodic_2d", f"{n2d}x{n2d}",
         lambda k: k.apply_periodic_2d(u2, cxx, cyy, cq, ih2, ih2, ih2, o2)),
        ("periodic_2d/diag", f"{n2d}x{n2d}",
         lambda k: k.apply_periodic_2d(u2, cxx, cyy, None, ih2, ih2, ih2, o2)),
        ("dirichlet_2d", f"{n2d}x{n2d}",
         lambda k: k.apply_dirichlet_2d(u2, dxx, dyy, dq, ih2, ih2, ih2, o2)),
    ]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n1d", type=int, default=262144)
    ap.add_argument("--n2d", type=int, default=512)
    ap.add_argument("--repeats", type=int, default=7)
    args = ap.parse_args()

    backends = available_backends()
    mods = {name: backend_module(name) for name in backends}
    rng = np.random.default_rng(0)
    cases = _cases(args.n1d, args.n2d, rng)

    width = max(len(k) for k, _, _ in cases)
    header = f"{'kernel':<{width}}  {'size':>9}"
    for name in backends:
        header += f"  {name + ' [ms]':>14}"
    if len(backends) == 2:
        header += f"  {'speedup':>8}"
    print(header)
    print("-" * len(header))

    for kernel, size, call in cases:
        times = {}
        for name in backends:
            mod = mods[name]
            call(mod)  # warm up
            times[name] = _best_of(args.repeats, lambda: call(mod))
        row = f"{kernel:<{width}}  {size:>9}"
        for name in backends:
            row += f"  {times[name] * 1e3:>14.3f}"
        if len(backends) == 2:
            row += f"  {times['numpy'] / times['compiled']:>7.2f}x"
        print(row)

    if len(backends) < 2:
        print("\ncompiled backend not importable; numpy only")


if __name__ == "__main__":
    main()
