"""Unfolding operators: exact gather, identities, and the tiling defect."""

import math

import numpy as np
import pytest

from unfold_homog.errors import AlignmentError, ConfigurationError
from unfold_homog.fieldgrid import GridFunction, grad_M, grid_from_callable
from unfold_homog.geometry import Atlas, Chart, MetricField, single_chart_atlas
from unfold_homog.unfolding import (
    UnfoldConfig,
    check_alignment,
    check_divergence_exchange,
    check_gradient_exchange,
    check_metric_exchange,
    norm_ratio,
    norm_ratio_bound,
    overlap_gap,
    ucm_residual,
    unfold_global,
    unfold_local,
    unfold_metric,
    unfold_vector,
)


def _field(box, h, fn, kind="free", chart_id="main"):
    return grid_from_callable(np.asarray(box, dtype=float), h, fn, kind=kind,
                              chart_id=chart_id)


def _two_chart_atlas():
    left = Chart("left", np.array([[0.0, 0.625]]), np.array([0.0]), np.eye(1))
    right = Chart("right", np.array([[0.0, 0.625]]), np.array([-0.375]), np.eye(1))
    return Atlas([left, right], np.array([1.0]))


def _two_chart_fields(atlas, h, fn, kind="free"):
    ref = atlas.charts[0]
    out = {}
    for c in atlas.charts:
        shift = ref.offset - c.offset

        def chart_fn(pts, shift=shift):
            return fn(pts + shift)

        out[c.id] = _field(c.box, h, chart_fn, kind=kind, chart_id=c.id)
    return out


# ---------------------------------------------------------------- config

def test_unfold_config_validation():
    cfg = UnfoldConfig(0.25, 8)
    assert cfg.h == 0.25 / 8
    with pytest.raises(ConfigurationError):
        UnfoldConfig(0.0, 8)
    with pytest.raises(ConfigurationError):
        UnfoldConfig(0.25, 1)
    with pytest.raises(ConfigurationError):
        UnfoldConfig(0.25, 2.5)


def test_alignment_errors_name_axis():
    f = _field([[0.0, 1.0]], [1.0 / 12], lambda p: p[..., 0])
    with pytest.raises(AlignmentError) as err:
        check_alignment(f, UnfoldConfig(0.25, 4))  # eps/h = 3, not 4
    assert err.value.axis == 0
    g = GridFunction("main", np.array([0.1]), np.array([1.0 / 16]),
                     np.zeros(5), kind="free")
    with pytest.raises(AlignmentError):
        check_alignment(g, UnfoldConfig(0.25, 4))  # anchor off the lattice


def test_box_shorter_than_one_cell():
    f = _field([[0.0, 0.125]], [1.0 / 16], lambda p: p[..., 0])
    with pytest.raises(AlignmentError):
        unfold_local(f, UnfoldConfig(0.25, 4))


# ---------------------------------------------------------------- gather

def test_unfold_is_an_exact_gather():
    r = np.random.default_rng(3)
    nc, eps = 4, 0.25
    vals = r.standard_normal(17)
    f = GridFunction("main", np.array([0.0]), np.array([eps / nc]), vals, kind="free")
    uf = unfold_local(f, UnfoldConfig(eps, nc))
    assert uf.cell_counts == (4,)
    for b in range(4):
        for j in range(nc):
            assert uf.values[b, j] == vals[b * nc + j]
    assert uf.excluded_cells == []


def test_unfold_points_reconstruction():
    nc, eps = 8, 0.125

    def fn(p):
        return np.sin(3.0 * p[..., 0]) + p[..., 0] ** 2

    f = _field([[0.0, 1.0]], [eps / nc], fn)
    uf = unfold_local(f, UnfoldConfig(eps, nc))
    pts = uf.anchor_plus_eps_y()
    assert np.max(np.abs(uf.values - fn(pts))) <= 1e-12


def test_unfold_2d_gather_and_exclusions():
    nc, eps = 4, 0.25
    f = _field([[0.0, 1.0], [0.0, 0.9]], [eps / nc, 0.9 / 12],
               lambda p: p[..., 0] + 10.0 * p[..., 1])
    # second axis: h = 0.075, eps/h = 10/3 -> misaligned
    with pytest.raises(AlignmentError):
        unfold_local(f, UnfoldConfig(eps, nc))
    g = _field([[0.0, 1.0], [0.0, 0.75]], [eps / nc, eps / nc],
               lambda p: p[..., 0] + 10.0 * p[..., 1])
    uf = unfold_local(g, UnfoldConfig(eps, nc))
    assert uf.cell_counts == (4, 3)
    assert uf.excluded_cells == []
    h = _field([[0.0, 0.9]], [0.025], lambda p: p[..., 0])
    ufh = unfold_local(h, UnfoldConfig(0.25, 10))
    assert ufh.cell_counts == (3,)
    assert ufh.excluded_cells == [(3,)]


# ---------------------------------------------------------------- overlap

def test_two_chart_overlap_agreement():
    atlas = _two_chart_atlas()
    cfg = UnfoldConfig(0.125, 8)

    def fn(p):
        return np.cos(2.0 * p[..., 0]) + 0.3 * p[..., 0]

    fields = _two_chart_fields(atlas, [cfg.h], fn)
    assert overlap_gap(fields, atlas, cfg) <= 1e-13


def test_global_unfolding_matches_single_chart():
    atlas = _two_chart_atlas()
    cfg = UnfoldConfig(0.125, 8)

    def fn(p):
        return np.sin(2.5 * p[..., 0]) + 1.0

    fields = _two_chart_fields(atlas, [cfg.h], fn)
    merged = unfold_global(fields, atlas, cfg)
    whole = unfold_local(_field([[0.0, 1.0]], [cfg.h], fn), cfg)
    assert merged.cell_counts == (8,)
    assert merged.excluded_cells == []
    assert np.max(np.abs(merged.values - whole.values)) <= 1e-13


def test_global_unfolding_guards():
    atlas = _two_chart_atlas()
    cfg = UnfoldConfig(0.125, 8)
    fields = _two_chart_fields(atlas, [cfg.h], lambda p: p[..., 0])
    with pytest.raises(ConfigurationError):
        unfold_global(fields, atlas, cfg, partition={"left": lambda p: np.ones(p.shape[:-1])})
    bad = {c.id: (lambda p: 0.5 * np.ones(np.asarray(p).shape[:-1]))
           for c in atlas.charts}
    with pytest.raises(ConfigurationError):
        unfold_global(fields, atlas, cfg, partition=bad)


# ---------------------------------------------------------------- exchange

def test_metric_exchange_1d_two_charts():
    atlas = _two_chart_atlas()
    cfg = UnfoldConfig(0.125, 8)
    metric = MetricField.constant([[2.0]])

    def fn(p):
        return np.sin(2.0 * p[..., 0]) + 0.5 * p[..., 0] ** 2

    for c in atlas.charts:
        f = _field(c.box, [cfg.h], fn, chart_id=c.id)
        v = grad_M(f, metric)
        w = grad_M(_field(c.box, [cfg.h], lambda p: np.cos(p[..., 0]),
                          chart_id=c.id), metric)
        assert check_metric_exchange(v, w, metric, cfg) <= 1e-12


def test_gradient_exchange_2d():
    cfg = UnfoldConfig(0.25, 8)
    metric = MetricField.constant([[2.0, 0.5], [0.5, 1.0]])

    def fn(p):
        return np.sin(2.0 * p[..., 0]) * np.cos(1.5 * p[..., 1]) + p[..., 0]

    f = _field([[0.0, 1.0], [0.0, 1.0]], [cfg.h, cfg.h], fn)
    rep = check_gradient_exchange(f, metric, cfg)
    assert rep.max_interior <= 1e-12 * rep.scale
    # one-sided stencils at the two cell-edge layers differ at O(h)
    assert rep.max_edge <= 1.0


def test_divergence_exchange_2d():
    cfg = UnfoldConfig(0.25, 8)
    metric = MetricField.constant([[2.0, 0.5], [0.5, 1.0]])

    def fn(p):
        return np.sin(2.0 * p[..., 0]) + np.cos(1.5 * p[..., 1])

    f = _field([[0.0, 1.0], [0.0, 1.0]], [cfg.h, cfg.h], fn)
    v = grad_M(f, metric)
    rep = check_divergence_exchange(v, metric, cfg)
    assert rep.max_interior <= 1e-12 * rep.scale


def test_exchange_with_varying_metric():
    cfg = UnfoldConfig(0.125, 8)
    metric = MetricField.from_entries([["1 + 0.5*x1"]], 1)

    def fn(p):
        return np.sin(2.0 * p[..., 0])

    f = _field([[0.0, 1.0]], [cfg.h], fn)
    rep = check_gradient_exchange(f, metric, cfg)
    assert rep.max_interior <= 1e-12 * rep.scale
    v = grad_M(f, metric)
    w = grad_M(_field([[0.0, 1.0]], [cfg.h], lambda p: p[..., 0] ** 2), metric)
    assert check_metric_exchange(v, w, metric, cfg) <= 1e-12


def test_unfolded_metric_freezes_anchors():
    cfg = UnfoldConfig(0.25, 4)
    metric = MetricField.from_entries([["1 + x1"]], 1)
    f = _field([[0.0, 1.0]], [cfg.h], lambda p: p[..., 0])
    um = unfold_metric(metric, f, cfg)
    assert um.entries.shape == (4, 4, 1, 1)
    assert um.limit_entries.shape == (4, 1, 1)
    anchors = np.array([0.0, 0.25, 0.5, 0.75])
    assert np.max(np.abs(um.limit_entries[:, 0, 0] - (1.0 + anchors))) <= 1e-13
    # entry at (cell b, sample j) is the metric at eps*b + eps*j/N_c
    assert abs(um.entries[2, 3, 0, 0] - (1.0 + 0.5 + 0.25 * 0.75)) <= 1e-13


def test_unfold_vector_is_componentwise():
    cfg = UnfoldConfig(0.25, 4)
    metric = MetricField.identity(2)
    f = _field([[0.0, 1.0], [0.0, 1.0]], [cfg.h, cfg.h],
               lambda p: p[..., 0] ** 2 + p[..., 1])
    v = grad_M(f, metric)
    uv = unfold_vector(v, cfg)
    assert uv.values.shape == (4, 4, 4, 4, 2)
    comp0 = GridFunction(v.chart_id, v.lo, v.h, v.components[..., 0], v.kind)
    assert np.array_equal(uv.values[..., 0], unfold_local(comp0, cfg).values)


# ---------------------------------------------------------------- residual

def test_ucm_vanishes_on_exact_tiling():
    atlas = single_chart_atlas(np.array([[0.0, 1.0]]))
    cfg = UnfoldConfig(0.125, 8)
    r = np.random.default_rng(11)
    vals = r.uniform(0.5, 1.5, 65)
    f = GridFunction("main", np.array([0.0]), np.array([cfg.h]), vals, kind="free")
    metric = MetricField.identity(1)
    res = ucm_residual(f, metric, atlas, cfg)
    l1 = float(np.sum(vals[:-1]) * cfg.h)
    assert res <= 1e-12 * l1


def test_ucm_partial_cell_mass():
    # f = 1 on [0, 0.9] with eps = 1/4: three full cells cover 0.75 and
    # the residual is exactly the leftover mass 0.15
    atlas = single_chart_atlas(np.array([[0.0, 0.9]]))
    cfg = UnfoldConfig(0.25, 10)
    f = _field([[0.0, 0.9]], [cfg.h], lambda p: np.ones(p.shape[:-1]))
    res = ucm_residual(f, MetricField.identity(1), atlas, cfg)
    assert abs(res - 0.15) <= 1e-12


def test_ucm_decreases_with_eps():
    box = np.array([[0.0, 63.0 / 64.0]])
    atlas = single_chart_atlas(box)
    metric = MetricField.identity(1)
    expected = [0.109375, 0.046875, 0.015625]
    got = []
    for eps, want in zip([1.0 / 8, 1.0 / 16, 1.0 / 32], expected):
        cfg = UnfoldConfig(eps, 8)
        f = _field(box, [cfg.h], lambda p: np.ones(p.shape[:-1]))
        res = ucm_residual(f, metric, atlas, cfg)
        assert abs(res - want) <= 1e-12
        got.append(res)
    assert got[0] > got[1] > got[2]


def test_ucm_requires_unit_cell():
    atlas = single_chart_atlas(np.array([[0.0, 1.0]]), cell_edge=np.array([0.5]))
    cfg = UnfoldConfig(0.125, 8)
    f = _field([[0.0, 1.0]], [cfg.h], lambda p: np.ones(p.shape[:-1]))
    with pytest.raises(ConfigurationError):
        ucm_residual(f, MetricField.identity(1), atlas, cfg)


# ---------------------------------------------------------------- norms

def test_norm_ratio_on_exact_tiling():
    atlas = single_chart_atlas(np.array([[0.0, 1.0]]))
    cfg = UnfoldConfig(0.125, 8)
    metric = MetricField.identity(1)
    f = _field([[0.0, 1.0]], [cfg.h], lambda p: np.sin(2 * math.pi * p[..., 0]) + 2.0)
    ratio = norm_ratio(f, metric, atlas, cfg, p=2.0)
    assert abs(ratio - 1.0) <= 1e-12
    assert ratio <= norm_ratio_bound(metric, f, atlas, p=2.0)
    sup = norm_ratio(f, metric, atlas, cfg, p=math.inf)
    assert abs(sup - 1.0) <= 1e-12
    assert sup <= norm_ratio_bound(metric, f, atlas, p=math.inf)


def test_norm_ratio_zero_field_is_none():
    atlas = single_chart_atlas(np.array([[0.0, 1.0]]))
    cfg = UnfoldConfig(0.125, 8)
    f = _field([[0.0, 1.0]], [cfg.h], lambda p: np.zeros(p.shape[:-1]))
    assert norm_ratio(f, MetricField.identity(1), atlas, cfg) is None
    assert norm_ratio(f, MetricField.identity(1), atlas, cfg, p=math.inf) is None
