"""Run-configuration schema and builders."""

import json

import numpy as np
import pytest

from unfold_homog.config import (
    build_problem,
    build_transform,
    load_config,
    validate_config,
)
from unfold_homog.errors import ConfigurationError


def _minimal():
    return {
        "problem": {
            "box": [[0.0, 1.0]],
            "diffusion": "2 + sin(2*pi*y1)",
            "source": 1.0,
        },
    }


# ---------------------------------------------------------------- loading

def test_load_config_roundtrip(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps(_minimal()))
    assert load_config(path) == _minimal()


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigurationError, match="cannot read"):
        load_config(tmp_path / "absent.json")


def test_load_config_bad_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(ConfigurationError, match="not valid JSON"):
        load_config(path)


def test_load_config_root_must_be_object(tmp_path):
    path = tmp_path / "arr.json"
    path.write_text("[1, 2]")
    with pytest.raises(ConfigurationError, match="root must be"):
        load_config(path)


# ---------------------------------------------------------------- schema

def test_minimal_config_validates():
    assert validate_config(_minimal()) == []


def test_all_errors_reported_in_one_raise():
    cfg = {
        "problem": {"box": [[1.0, 0.0]], "diffusion": {"expr": 3},
                    "reaction": -2, "bogus": 1},
        "eps": -0.5,
        "eps_list": [0.1, 0.2],
        "seed": "seven",
        "grid": {"cells_per_eps": 1},
        "mystery": True,
    }
    with pytest.raises(ConfigurationError) as err:
        validate_config(cfg)
    text = str(err.value)
    for fragment in (
        "box axis 0 is empty",
        "'expr' must be a string",
        "problem.reaction",
        "unknown keys ['bogus']",
        "'eps' must be a positive number",
        "strictly decreasing",
        "'seed' must be an integer",
        "cells_per_eps",
        "unknown top-level keys ['mystery']",
    ):
        assert fragment in text, fragment


def test_problem_block_required():
    with pytest.raises(ConfigurationError, match="'problem' object is required"):
        validate_config({})


def test_diffusion_field_shapes():
    cfg = _minimal()
    cfg["problem"]["diffusion"] = {"expr": "2 + sin(2*pi*y1)", "constant": 1.0}
    with pytest.raises(ConfigurationError, match="exactly one of"):
        validate_config(cfg)
    cfg["problem"]["diffusion"] = {"values": [[1.0, 2.0], [3.0, 4.0]]}
    assert validate_config(cfg) == []
    # tables stay confined to the diffusion slot
    cfg["problem"]["diffusion"] = 1.0
    cfg["problem"]["source"] = {"values": [1.0, 2.0]}
    with pytest.raises(ConfigurationError, match="not allowed here"):
        validate_config(cfg)


def test_metric_block_validation():
    cfg = _minimal()
    cfg["problem"]["metric"] = {"identity": True, "constant": [[1.0]]}
    with pytest.raises(ConfigurationError, match="exactly one of"):
        validate_config(cfg)
    cfg["problem"]["metric"] = "diag"
    with pytest.raises(ConfigurationError, match="must be an object or entry"):
        validate_config(cfg)
    cfg["problem"]["metric"] = [["1 + x1"]]
    assert validate_config(cfg) == []


def test_atlas_block_validation():
    cfg = _minimal()
    cfg["atlas"] = {"charts": [
        {"id": "a", "box": [[0.0, 0.5]], "offset": [0.0]},
        {"id": "a", "box": [[0.0, 0.5]], "offset": [0.5]},
    ]}
    with pytest.raises(ConfigurationError, match="duplicate chart ids"):
        validate_config(cfg)
    cfg["atlas"] = {"charts": [{"id": "a", "box": [[0.0, 0.5]], "offset": "x"}]}
    with pytest.raises(ConfigurationError, match="offset"):
        validate_config(cfg)
    cfg["atlas"] = {"charts": [], "cell_edge": [0.0]}
    with pytest.raises(ConfigurationError, match="cell_edge"):
        validate_config(cfg)


def test_transform_block_validation():
    cfg = _minimal()
    cfg["transform"] = {"perm": [0, 1]}
    with pytest.raises(ConfigurationError, match="length must match"):
        validate_config(cfg)
    cfg["transform"] = {"perm": [0], "refine": "yes"}
    with pytest.raises(ConfigurationError, match="must be a boolean"):
        validate_config(cfg)
    cfg["transform"] = {"perm": [0], "scales": [2.0], "refine": True}
    assert validate_config(cfg) == []


def test_seed_rejects_bool():
    cfg = _minimal()
    cfg["seed"] = True
    with pytest.raises(ConfigurationError, match="seed"):
        validate_config(cfg)
    cfg["seed"] = 7
    assert validate_config(cfg) == []


# ---------------------------------------------------------------- builders

def test_build_problem_defaults():
    p = build_problem(_minimal())
    assert p.n == 1
    assert p.reaction == 0.0
    assert p.metric.matrix(np.array([0.3]))[0, 0] == 1.0
    assert p.diffusion.d0 is None  # estimated lazily from samples
    assert len(p.atlas.charts) == 1


def test_build_problem_full_blocks():
    cfg = {
        "problem": {
            "box": [[0.0, 1.0], [0.0, 1.0]],
            "metric": {"constant": [[2.0, 0.5], [0.5, 1.0]]},
            "diffusion": {"expr": "2 + sin(2*pi*y1)", "d0": 1.0, "D0": 3.0},
            "source": "sin(pi*x1)*sin(pi*x2)",
            "reaction": 0.5,
        },
    }
    p = build_problem(cfg)
    assert p.n == 2
    assert p.reaction == 0.5
    assert p.diffusion.d0 == 1.0 and p.diffusion.D0 == 3.0
    assert np.allclose(p.metric.matrix(np.zeros(2)), [[2.0, 0.5], [0.5, 1.0]])
    # source is an x-expression evaluated by the solver, not a y one
    from unfold_homog.solve import _sample_scalar
    val = _sample_scalar(p.source, np.array([[0.5, 0.5]]), 2)[0]
    assert abs(val - 1.0) <= 1e-15


def test_build_problem_table_diffusion():
    cfg = _minimal()
    cfg["problem"]["diffusion"] = {"values": [1.0, 2.0, 2.0, 1.0]}
    p = build_problem(cfg)
    assert p.diffusion.d0 == 1.0 and p.diffusion.D0 == 2.0


def test_build_problem_two_charts():
    cfg = _minimal()
    cfg["atlas"] = {"charts": [
        {"id": "left", "box": [[0.0, 0.625]], "offset": [0.0]},
        {"id": "right", "box": [[0.0, 0.625]], "offset": [-0.375]},
    ]}
    p = build_problem(cfg)
    assert [c.id for c in p.atlas.charts] == ["left", "right"]
    assert np.allclose(p.atlas.chart("right").offset, [-0.375])


def test_build_transform():
    cfg = _minimal()
    cfg["transform"] = {"perm": [0], "scales": [2.0]}
    t = build_transform(cfg, 1)
    assert np.array_equal(t.matrix, [[2.0]])
    assert "scales" in t.description
    with pytest.raises(ConfigurationError, match="needs a 'transform'"):
        build_transform(_minimal(), 1)


def test_build_problem_rejects_invalid():
    cfg = _minimal()
    cfg["problem"]["box"] = [[0.0, 0.0]]
    with pytest.raises(ConfigurationError):
        build_problem(cfg)
