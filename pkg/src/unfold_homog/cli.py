"""Command line front end.

Every subcommand reads one JSON config, writes its artifacts into the
output directory, and finishes with a run manifest.  All artifacts
except manifest.json are byte-identical across reruns of the same
config; wall-clock timings live only in the manifest.

Exit codes: 0 success, 1 configuration or validation failure, 2
numerical failure (solver breakdown).
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

import numpy as np

from .cell import assemble_effective, check_spd, solve_cell
from .config import build_problem, build_transform, load_config
from .equivalence import check_cell_transform, check_invariance
from .errors import ConfigurationError, NumericError, ValidationError
from .fieldgrid import grad_M, grid_from_callable, to_csv
from .geometry import validate_uc
from .report import svg_loglog, write_json, write_manifest
from .solve import (check_apriori, convergence_study, reference_effective,
                    solve_fine, solve_homogenized)
from .unfolding import (UnfoldConfig, check_divergence_exchange,
                        check_gradient_exchange, check_metric_exchange,
                        norm_ratio, norm_ratio_bound, overlap_gap,
                        ucm_residual, unfold_local)

SUBCOMMANDS = ("validate", "cell", "fine", "homogenize", "converge",
               "unfold-check", "equivalence")


class _Parser(argparse.ArgumentParser):
    # route usage errors through the package error types so the process
    # exits 1 instead of argparse's 2
    def error(self, message):
        raise ConfigurationError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="unfold-homog",
                     description="periodic unfolding and homogenization runs")
    sub = parser.add_subparsers(dest="command", metavar="command")
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name, add_help=True)
        sp.add_argument("--config", required=True, help="JSON run config")
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: UNFOLD_HOMOG_THREADS or all)")
        sp.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
        sp.add_argument("--tol", type=float, default=1e-10,
                        help="linear solver relative tolerance")
    return parser


def _resolve_threads(args) -> int | None:
    if args.threads is not None:
        if args.threads < 1:
            raise ConfigurationError("--threads must be >= 1")
        return args.threads
    env = os.environ.get("UNFOLD_HOMOG_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigurationError(
                f"UNFOLD_HOMOG_THREADS must be an integer, got {env!r}")
        if n < 1:
            raise ConfigurationError("UNFOLD_HOMOG_THREADS must be >= 1")
        return n
    return None


def _resolve_seed(cfg, args) -> int:
    return args.seed if args.seed is not None else int(cfg.get("seed", 0))


def _grid_block(cfg) -> dict:
    return cfg.get("grid", {})


def _need_eps(cfg) -> float:
    if "eps" not in cfg:
        raise ConfigurationError("this subcommand needs 'eps' in the config")
    return float(cfg["eps"])


def _default_n_cells(n, grid):
    nc = grid.get("n_cells")
    return nc if nc is not None else (256 if n == 1 else 64)


def _tensor_payload(t, d0, metric_min_eig) -> dict:
    return {
        "G": t.G,
        "B": t.B,
        "B_tilde": t.B_tilde,
        "eigenvalues": t.eigenvalues,
        "spd": check_spd(t, d0=d0, metric_min_eig=metric_min_eig, warn=False),
    }


def _cmd_validate(cfg, args, outdir):
    p = build_problem(cfg)
    eps_values = cfg.get("eps_list") or [_need_eps(cfg)]
    reports = []
    ok = True
    for e in eps_values:
        rep = validate_uc(p.atlas, float(e))
        ok = ok and rep.ok
        reports.append({"eps": rep.eps, "ok": rep.ok, "pairs": rep.pairs,
                        "messages": rep.messages})
    body = {
        "ok": ok,
        "n_charts": len(p.atlas.charts),
        "cell_edge": p.atlas.cell_edge,
        "eps_reports": reports,
    }
    path = outdir / "validate.json"
    write_json(path, body)
    if not ok:
        print("atlas validation failed; see validate.json", file=sys.stderr)
    return (0 if ok else 1), [path], {}


def _cmd_cell(cfg, args, outdir):
    p = build_problem(cfg)
    n_cells = _default_n_cells(p.n, _grid_block(cfg))
    mid = np.array([(lo + hi) / 2.0 for lo, hi in p.box])
    g = p.metric.matrix(mid)
    t0 = time.perf_counter()
    sol = solve_cell(p.diffusion, g, n_cells, tol=args.tol, x=mid)
    tensor = assemble_effective(p.diffusion, sol)
    dt = time.perf_counter() - t0
    body = _tensor_payload(tensor, p.diffusion.d0, float(np.min(np.linalg.eigvalsh(g))))
    body.update({"n_cells": n_cells, "x": mid,
                 "iterations": sol.iterations, "residuals": sol.residuals})
    path = outdir / "cell.json"
    write_json(path, body)
    return 0, [path], {"solve": dt}


def _solution_summary(res, h) -> dict:
    return {
        "eps": res.eps,
        "h": list(np.atleast_1d(h)),
        "iterations": res.iterations,
        "residual": res.residual,
        "energy": res.energy,
        "load": res.load,
        "energy_gap": res.energy_gap,
        "min_value": float(np.min(res.u.values)),
        "max_value": float(np.max(res.u.values)),
    }


def _cmd_fine(cfg, args, outdir):
    p = build_problem(cfg)
    eps = _need_eps(cfg)
    grid = _grid_block(cfg)
    h = grid.get("h", eps / grid.get("cells_per_eps", 32))
    t0 = time.perf_counter()
    res = solve_fine(p, eps, h, tol=args.tol)
    dt = time.perf_counter() - t0
    csv_path = outdir / "fine_u.csv"
    to_csv(res.u, csv_path)
    json_path = outdir / "fine.json"
    write_json(json_path, _solution_summary(res, res.u.h))
    return 0, [csv_path, json_path], {"solve": dt}


def _cmd_homogenize(cfg, args, outdir):
    p = build_problem(cfg)
    grid = _grid_block(cfg)
    t0 = time.perf_counter()
    b_field, _sol = reference_effective(p, n_cells=grid.get("n_cells"),
                                        tol=args.tol)
    lengths = [hi - lo for lo, hi in p.box]
    h = grid.get("h", min(lengths) / (256 if p.n == 1 else 64))
    res = solve_homogenized(p, b_field, h, tol=args.tol)
    dt = time.perf_counter() - t0
    gmin = float(np.min(np.linalg.eigvalsh(
        p.metric.matrix(np.array([(lo + hi) / 2.0 for lo, hi in p.box])))))
    if isinstance(b_field, list):
        effective = {"samples": [
            dict(_tensor_payload(t, p.diffusion.d0, gmin), x=x)
            for x, t in b_field]}
    else:
        effective = _tensor_payload(b_field, p.diffusion.d0, gmin)
    csv_path = outdir / "homogenized_u.csv"
    to_csv(res.u, csv_path)
    json_path = outdir / "homogenize.json"
    body = _solution_summary(res, res.u.h)
    body["effective"] = effective
    write_json(json_path, body)
    return 0, [csv_path, json_path], {"solve": dt}


def _cmd_converge(cfg, args, outdir):
    p = build_problem(cfg)
    if "eps_list" not in cfg:
        raise ConfigurationError("'converge' needs 'eps_list' in the config")
    grid = _grid_block(cfg)
    h_rule = grid.get("cells_per_eps", 32)
    t0 = time.perf_counter()
    table = convergence_study(p, cfg["eps_list"], h_rule=h_rule,
                              n_cells=grid.get("n_cells"), tol=args.tol,
                              threads=_resolve_threads(args))
    total = time.perf_counter() - t0
    apriori = check_apriori(p, table)
    csv_path = outdir / "converge.csv"
    table.to_csv(csv_path, include_seconds=False)
    svg_path = outdir / "converge.svg"
    svg_loglog(svg_path, table.eps, {
        "l2_err": table.l2_err,
        "unfolded_l2_err": table.unfolded_l2_err,
        "corrector_h1_err": table.corrector_h1_err,
        "ucm_residual": table.ucm_residual,
    }, xlabel="eps", ylabel="error", title="convergence sweep")
    json_path = outdir / "converge.json"
    write_json(json_path, {
        "eps": table.eps,
        "monotone": table.monotone,
        "apriori": apriori,
        "iterations": table.iterations,
        "cells_per_eps": h_rule,
    })
    timings = {"total": total,
               "per_eps": {format(e, ".17g"): s
                           for e, s in zip(table.eps, table.seconds)}}
    return 0, [csv_path, svg_path, json_path], timings


def _random_trig(n, seed):
    """Deterministic smooth test field: a few integer-frequency waves."""
    rng = np.random.default_rng(seed)
    amps = rng.uniform(0.5, 1.5, size=3)
    freqs = rng.integers(1, 4, size=(3, n)).astype(float)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=3)

    def fn(pts):
        pts = np.asarray(pts, dtype=float)
        out = np.ones(pts.shape[:-1])
        for a, k, ph in zip(amps, freqs, phases):
            out = out + a * np.sin(2.0 * np.pi * (pts @ k) + ph)
        return out

    return fn, f"random-trig(seed={seed})"


def _exchange_dict(rep) -> dict:
    return {"max_interior": rep.max_interior, "max_edge": rep.max_edge,
            "scale": rep.scale}


def _cmd_unfold_check(cfg, args, outdir):
    p = build_problem(cfg)
    eps = _need_eps(cfg)
    grid = _grid_block(cfg)
    nc = grid.get("cells_per_eps", 8)
    ucfg = UnfoldConfig(eps, nc)
    if np.any(p.atlas.cell_edge != 1.0):
        raise ConfigurationError("unfold-check needs unit reference cells")
    seed = _resolve_seed(cfg, args)
    field_cfg = cfg.get("unfold", {}).get("field")
    if field_cfg is None:
        fn, field_desc = _random_trig(p.n, seed)
    else:
        from . import expr as ex
        src = field_cfg if isinstance(field_cfg, str) else (
            field_cfg.get("expr") or str(field_cfg.get("constant")))
        node = ex.parse(src, ex.default_variables(p.n, "x"))
        names = ex.default_variables(p.n, "x")

        def fn(pts, _node=node, _names=names):
            pts = np.asarray(pts, dtype=float)
            env = {nm: pts[..., i] for i, nm in enumerate(_names)}
            return ex.eval_node(_node, env) * np.ones(pts.shape[:-1])

        field_desc = src
    ref = p.atlas.charts[0]
    fields = {}
    for chart in p.atlas.charts:
        shift = ref.offset - chart.offset

        def chart_fn(pts, _shift=shift):
            return fn(np.asarray(pts, dtype=float) + _shift)

        fields[chart.id] = grid_from_callable(chart.box, ucfg.h, chart_fn,
                                              kind="free", chart_id=chart.id)
    f0 = fields[ref.id]
    t0 = time.perf_counter()
    ones = {cid: f.like(np.ones_like(f.values)) for cid, f in fields.items()}
    uc = validate_uc(p.atlas, eps)
    v = grad_M(f0, p.metric)
    body = {
        "eps": eps,
        "cells_per_eps": nc,
        "h": ucfg.h,
        "field": field_desc,
        "uc_lattice": {"ok": uc.ok, "pairs": uc.pairs, "messages": uc.messages},
        "excluded_cells": len(unfold_local(f0, ucfg).excluded_cells),
        "ucm_residual": ucm_residual(fields, p.metric, p.atlas, ucfg),
        "ucm_residual_unit": ucm_residual(ones, p.metric, p.atlas, ucfg),
        "norm_ratio_l2": norm_ratio(fields, p.metric, p.atlas, ucfg, p=2.0),
        "norm_ratio_l2_bound": norm_ratio_bound(p.metric, f0, p.atlas, p=2.0),
        "norm_ratio_sup": norm_ratio(fields, p.metric, p.atlas, ucfg, p=np.inf),
        "metric_exchange_gap": check_metric_exchange(v, v, p.metric, ucfg),
        "gradient_exchange": _exchange_dict(
            check_gradient_exchange(f0, p.metric, ucfg)),
        "divergence_exchange": _exchange_dict(
            check_divergence_exchange(v, p.metric, ucfg)),
    }
    if len(p.atlas.charts) > 1:
        body["overlap_gap"] = overlap_gap(fields, p.atlas, ucfg)
    dt = time.perf_counter() - t0
    path = outdir / "unfold_check.json"
    write_json(path, body)
    code = 0 if uc.ok else 1
    return code, [path], {"checks": dt}


def _cmd_equivalence(cfg, args, outdir):
    p = build_problem(cfg)
    t = build_transform(cfg, p.n)
    tr = cfg.get("transform", {})
    grid = _grid_block(cfg)
    tolerance = float(cfg.get("tolerance", 1e-6))
    t0 = time.perf_counter()
    rep = check_invariance(p, t, n_cells=grid.get("n_cells"), tol=args.tol,
                           tolerance=tolerance,
                           refine=bool(tr.get("refine", False)),
                           eps_check=cfg.get("eps"))
    body = rep.to_dict()
    if tr.get("lambda_case"):
        mid = np.array([(lo + hi) / 2.0 for lo, hi in p.box])
        g = p.metric.matrix(mid)
        q = np.zeros(p.n)
        q[0] = 1.0
        cc = check_cell_transform(p.diffusion, g, t, q,
                                  n_cells=grid.get("n_cells", 64),
                                  tol=args.tol, g_z=g)
        body["cell_transform"] = cc
    dt = time.perf_counter() - t0
    path = outdir / "equivalence.json"
    write_json(path, body)
    if not rep.ok:
        print("equivalence check failed; see equivalence.json", file=sys.stderr)
    return (0 if rep.ok else 1), [path], {"checks": dt}


_HANDLERS = {
    "validate": _cmd_validate,
    "cell": _cmd_cell,
    "fine": _cmd_fine,
    "homogenize": _cmd_homogenize,
    "converge": _cmd_converge,
    "unfold-check": _cmd_unfold_check,
    "equivalence": _cmd_equivalence,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise ConfigurationError("a subcommand is required "
                                     f"(one of: {', '.join(SUBCOMMANDS)})")
        cfg = load_config(args.config)
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        code, artifacts, timings = _HANDLERS[args.command](cfg, args, outdir)
        write_manifest(outdir / "manifest.json", args.config,
                       options={"command": args.command, "out": str(outdir),
                                "tol": args.tol},
                       timings=timings,
                       artifacts=[a.name for a in artifacts],
                       seed=_resolve_seed(cfg, args),
                       threads=_resolve_threads(args))
        for a in artifacts:
            print(a)
        return code
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 2
