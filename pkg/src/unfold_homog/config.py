"""JSON run configuration: schema validation and object builders.

The schema is documented in the README.  Validation collects every
violation before raising, so a bad config reports all its problems in
one pass."""

from __future__ import annotations

import json

import numpy as np

from . import expr as ex
from .cell import CoefficientField
from .errors import ConfigurationError
from .geometry import Atlas, Chart, MetricField, single_chart_atlas
from .solve import ProblemSpec


def load_config(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as e:
        raise ConfigurationError(f"cannot read config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"config {path} is not valid JSON: {e}") from e
    if not isinstance(cfg, dict):
        raise ConfigurationError("config root must be a JSON object")
    return cfg


def _is_num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _box_ok(box, errors, where):
    if not (isinstance(box, list) and box
            and all(isinstance(b, list) and len(b) == 2
                    and all(_is_num(v) for v in b) for b in box)):
        errors.append(f"{where}: box must be a list of [lo, hi] pairs")
        return False
    for i, (lo, hi) in enumerate(box):
        if not hi > lo:
            errors.append(f"{where}: box axis {i} is empty ([{lo}, {hi}])")
    return True


def _scalar_field_ok(node, errors, where, allow_table=False):
    if node is None:
        errors.append(f"{where}: missing")
        return
    if _is_num(node) or isinstance(node, str):
        return
    if not isinstance(node, dict):
        errors.append(f"{where}: must be a number, an expression string, or "
                      "an object with one of 'expr', 'constant', 'values'")
        return
    keys = {"expr", "constant", "values", "d0", "D0"}
    unknown = set(node) - keys
    if unknown:
        errors.append(f"{where}: unknown keys {sorted(unknown)}")
    present = [k for k in ("expr", "constant", "values") if k in node]
    if len(present) != 1:
        errors.append(f"{where}: exactly one of 'expr', 'constant', 'values' "
                      "is required")
        return
    kind = present[0]
    if kind == "expr" and not isinstance(node["expr"], str):
        errors.append(f"{where}: 'expr' must be a string")
    if kind == "constant" and not _is_num(node["constant"]):
        errors.append(f"{where}: 'constant' must be a number")
    if kind == "values":
        if not allow_table:
            errors.append(f"{where}: 'values' tables are not allowed here")
        else:
            try:
                arr = np.asarray(node["values"], dtype=float)
            except (TypeError, ValueError):
                errors.append(f"{where}: 'values' must be a numeric array")
                return
            if arr.ndim not in (1, 2):
                errors.append(f"{where}: 'values' must be 1D or 2D")
    for bk in ("d0", "D0"):
        if bk in node and not _is_num(node[bk]):
            errors.append(f"{where}: '{bk}' must be a number")


VALID_TOP_KEYS = {"problem", "atlas", "eps", "eps_list", "grid", "tolerance",
                  "seed", "transform", "unfold", "output"}


def validate_config(cfg: dict) -> list:
    """Full schema walk; returns the (empty) error list or raises with
    every violation listed."""
    errors = []
    unknown = set(cfg) - VALID_TOP_KEYS
    if unknown:
        errors.append(f"unknown top-level keys {sorted(unknown)}")

    prob = cfg.get("problem")
    n = None
    if not isinstance(prob, dict):
        errors.append("'problem' object is required")
    else:
        box = prob.get("box")
        if _box_ok(box, errors, "problem.box"):
            n = len(box)
        unknown = set(prob) - {"box", "metric", "diffusion", "source",
                               "reaction"}
        if unknown:
            errors.append(f"problem: unknown keys {sorted(unknown)}")
        metric = prob.get("metric")
        if metric is not None and not isinstance(metric, (dict, list)):
            errors.append("problem.metric: must be an object or entry matrix")
        if isinstance(metric, dict):
            mk = [k for k in ("identity", "constant", "entries") if k in metric]
            if len(mk) != 1:
                errors.append("problem.metric: exactly one of 'identity', "
                              "'constant', 'entries' is required")
        _scalar_field_ok(prob.get("diffusion"), errors, "problem.diffusion",
                         allow_table=True)
        _scalar_field_ok(prob.get("source"), errors, "problem.source")
        reaction = prob.get("reaction", 0)
        if not _is_num(reaction) or reaction < 0:
            errors.append("problem.reaction: must be a nonnegative number")

    atlas = cfg.get("atlas")
    if atlas is not None:
        if not isinstance(atlas, dict) or not isinstance(atlas.get("charts"), list):
            errors.append("'atlas' must be an object with a 'charts' list")
        else:
            unknown = set(atlas) - {"charts", "cell_edge"}
            if unknown:
                errors.append(f"atlas: unknown keys {sorted(unknown)}")
            ce = atlas.get("cell_edge")
            if ce is not None and not (isinstance(ce, list)
                                       and all(_is_num(v) and v > 0 for v in ce)):
                errors.append("atlas.cell_edge: must be a list of positive numbers")
            ids = []
            for i, ch in enumerate(atlas["charts"]):
                where = f"atlas.charts[{i}]"
                if not isinstance(ch, dict):
                    errors.append(f"{where}: must be an object")
                    continue
                if not isinstance(ch.get("id"), str):
                    errors.append(f"{where}: string 'id' is required")
                else:
                    ids.append(ch["id"])
                _box_ok(ch.get("box"), errors, f"{where}.box")
                off = ch.get("offset")
                if not (isinstance(off, list) and all(_is_num(v) for v in off)):
                    errors.append(f"{where}.offset: must be a numeric list")
            if len(set(ids)) != len(ids):
                errors.append("atlas.charts: duplicate chart ids")

    for key in ("eps", "tolerance"):
        if key in cfg and (not _is_num(cfg[key]) or cfg[key] <= 0):
            errors.append(f"'{key}' must be a positive number")
    if "eps_list" in cfg:
        el = cfg["eps_list"]
        if not (isinstance(el, list) and el
                and all(_is_num(v) and v > 0 for v in el)):
            errors.append("'eps_list' must be a nonempty list of positive numbers")
        elif any(b >= a for a, b in zip(el, el[1:])):
            errors.append("'eps_list' must be strictly decreasing")
    if "seed" in cfg and not (isinstance(cfg["seed"], int)
                              and not isinstance(cfg["seed"], bool)
                              and 0 <= cfg["seed"] < 2 ** 64):
        errors.append("'seed' must be an integer in [0, 2^64)")

    grid = cfg.get("grid", {})
    if not isinstance(grid, dict):
        errors.append("'grid' must be an object")
    else:
        unknown = set(grid) - {"cells_per_eps", "h", "n_cells"}
        if unknown:
            errors.append(f"grid: unknown keys {sorted(unknown)}")
        cpe = grid.get("cells_per_eps")
        if cpe is not None and not (isinstance(cpe, int) and cpe >= 2):
            errors.append("grid.cells_per_eps: must be an integer >= 2")
        if "h" in grid and (not _is_num(grid["h"]) or grid["h"] <= 0):
            errors.append("grid.h: must be a positive number")
        nc = grid.get("n_cells")
        if nc is not None and not (isinstance(nc, int) and nc >= 4):
            errors.append("grid.n_cells: must be an integer >= 4")

    tr = cfg.get("transform")
    if tr is not None:
        if not isinstance(tr, dict):
            errors.append("'transform' must be an object")
        else:
            unknown = set(tr) - {"perm", "signs", "scales", "refine",
                                 "lambda_case"}
            if unknown:
                errors.append(f"transform: unknown keys {sorted(unknown)}")
            for key in ("perm", "signs", "scales"):
                if key in tr and not (isinstance(tr[key], list)
                                      and all(_is_num(v) for v in tr[key])):
                    errors.append(f"transform.{key}: must be a numeric list")
            if "perm" in tr and n is not None and len(tr["perm"]) != n:
                errors.append("transform.perm: length must match the dimension")
            for key in ("refine", "lambda_case"):
                if key in tr and not isinstance(tr[key], bool):
                    errors.append(f"transform.{key}: must be a boolean")

    unf = cfg.get("unfold")
    if unf is not None:
        if not isinstance(unf, dict):
            errors.append("'unfold' must be an object")
        else:
            unknown = set(unf) - {"field"}
            if unknown:
                errors.append(f"unfold: unknown keys {sorted(unknown)}")
            if "field" in unf:
                _scalar_field_ok(unf["field"], errors, "unfold.field")

    if "output" in cfg and not isinstance(cfg["output"], str):
        errors.append("'output' must be a string path")

    if errors:
        raise ConfigurationError(
            "config validation failed:\n  - " + "\n  - ".join(errors))
    return errors


def _build_metric(node, n) -> MetricField:
    if node is None:
        return MetricField.identity(n)
    if isinstance(node, list):
        return MetricField.from_entries(node, n)
    if "identity" in node:
        return MetricField.identity(n)
    if "constant" in node:
        return MetricField.constant(np.asarray(node["constant"], dtype=float))
    return MetricField.from_entries(node["entries"], n)


def _build_coefficient(node, n) -> CoefficientField:
    if _is_num(node):
        return CoefficientField.constant(float(node), n)
    if isinstance(node, str):
        return CoefficientField.from_expr(node, n)
    if "constant" in node:
        return CoefficientField.constant(float(node["constant"]), n)
    if "values" in node:
        return CoefficientField.from_table(np.asarray(node["values"], dtype=float))
    return CoefficientField.from_expr(node["expr"], n,
                                      d0=node.get("d0"), D0=node.get("D0"))


def _build_source(node, n):
    if _is_num(node):
        return float(node)
    if isinstance(node, str):
        return ex.parse(node, ex.default_variables(n, "x"))
    if "constant" in node:
        return float(node["constant"])
    return ex.parse(node["expr"], ex.default_variables(n, "x"))


def _build_atlas(cfg, box, diffusion) -> Atlas:
    node = cfg.get("atlas")
    if node is None:
        return single_chart_atlas(box, cell_edge=diffusion.cell_edge)
    n = len(box)
    charts = []
    for ch in node["charts"]:
        charts.append(Chart(ch["id"], tuple(tuple(b) for b in ch["box"]),
                            np.asarray(ch["offset"], dtype=float),
                            np.eye(n)))
    edge = node.get("cell_edge")
    edge = diffusion.cell_edge if edge is None else np.asarray(edge, dtype=float)
    return Atlas(tuple(charts), cell_edge=edge)


def build_problem(cfg: dict) -> ProblemSpec:
    validate_config(cfg)
    prob = cfg["problem"]
    box = tuple(tuple(b) for b in prob["box"])
    n = len(box)
    metric = _build_metric(prob.get("metric"), n)
    diffusion = _build_coefficient(prob.get("diffusion"), n)
    source = _build_source(prob.get("source", 0.0), n)
    atlas = _build_atlas(cfg, box, diffusion)
    return ProblemSpec(box=box, metric=metric, diffusion=diffusion,
                       source=source, reaction=float(prob.get("reaction", 0.0)),
                       atlas=atlas)


def build_transform(cfg: dict, n: int):
    from .equivalence import AtlasTransform

    tr = cfg.get("transform")
    if tr is None:
        raise ConfigurationError("this subcommand needs a 'transform' block")
    perm = [int(v) for v in tr.get("perm", range(n))]
    signs = tr.get("signs")
    scales = tr.get("scales")
    desc = f"perm={perm}"
    if signs:
        desc += f" signs={signs}"
    if scales:
        desc += f" scales={scales}"
    return AtlasTransform.from_parts(perm=perm, signs=signs, scales=scales,
                                     description=desc)
