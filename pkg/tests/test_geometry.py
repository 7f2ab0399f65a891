import numpy as np
import pytest

from unfold_homog import (AffineMap, Atlas, Chart, ConfigurationError,
                          GeometryError, MetricField, metric_pair,
                          ramp_partition, single_chart_atlas, validate_uc)


def test_affine_map_apply_and_inverse():
    m = AffineMap(np.array([[2.0, 0.0], [0.0, 3.0]]), np.array([1.0, -1.0]))
    pts = np.array([[1.0, 1.0], [0.0, 2.0]])
    out = m(pts)
    np.testing.assert_allclose(out, [[3.0, 2.0], [1.0, 5.0]])
    back = m.inverse()(out)
    np.testing.assert_allclose(back, pts, atol=1e-14)


def test_affine_map_compose():
    a = AffineMap(np.array([[2.0]]), np.array([1.0]))
    b = AffineMap(np.array([[3.0]]), np.array([-1.0]))
    c = a.compose(b)  # a(b(x)) = 2*(3x - 1) + 1 = 6x - 1
    np.testing.assert_allclose(c.matrix, [[6.0]])
    np.testing.assert_allclose(c.shift, [-1.0])


def test_affine_map_rejects_singular():
    with pytest.raises(GeometryError):
        AffineMap(np.zeros((2, 2)), np.zeros(2))


def test_chart_validation():
    with pytest.raises(GeometryError):
        Chart("c", ((1.0, 1.0),), np.zeros(1), np.eye(1))
    with pytest.raises(GeometryError):
        Chart("c", ((0.0, 1.0),), np.zeros(2), np.eye(1))


def test_chart_abstract_box_undoes_offset():
    c = Chart("c", ((0.0, 1.0),), np.array([0.25]), np.eye(1))
    (lo, hi), = c.abstract_box()
    assert lo == pytest.approx(-0.25)
    assert hi == pytest.approx(0.75)


def test_atlas_rejects_duplicate_ids_and_mixed_dims():
    c1 = Chart("a", ((0.0, 1.0),), np.zeros(1), np.eye(1))
    c2 = Chart("a", ((0.0, 2.0),), np.zeros(1), np.eye(1))
    with pytest.raises(ConfigurationError):
        Atlas((c1, c2))
    c3 = Chart("b", ((0.0, 1.0), (0.0, 1.0)), np.zeros(2), np.eye(2))
    with pytest.raises(ConfigurationError):
        Atlas((c1, c3))
    with pytest.raises(ConfigurationError):
        Atlas(())
    with pytest.raises(ConfigurationError):
        Atlas((c1,), cell_edge=[-1.0])


def test_single_chart_atlas_defaults():
    atlas = single_chart_atlas(((0.0, 2.0), (0.0, 1.0)))
    assert atlas.n == 2
    np.testing.assert_allclose(atlas.cell_edge, [1.0, 1.0])
    assert atlas.cell_volume == 1.0


def test_validate_uc_accepts_lattice_translations():
    a = Chart("a", ((0.0, 0.625),), np.array([0.0]), np.eye(1))
    b = Chart("b", ((0.0, 0.625),), np.array([-0.375]), np.eye(1))
    atlas = Atlas((a, b))
    rep = validate_uc(atlas, 0.125)
    assert rep.ok
    assert rep.pairs[0]["k"] == [3]
    assert rep.pairs[0]["max_abs_error"] <= 1e-12


def test_validate_uc_flags_off_lattice_offsets():
    # eps = 0.4 with offset difference 0.75 is the canonical violation
    a = Chart("a", ((0.0, 1.0),), np.array([0.0]), np.eye(1))
    b = Chart("b", ((0.0, 1.0),), np.array([0.75]), np.eye(1))
    rep = validate_uc(Atlas((a, b)), 0.4)
    assert not rep.ok
    assert any("violation" in p for p in rep.pairs)
    assert rep.messages


def test_validate_uc_flags_unequal_linear_parts():
    a = Chart("a", ((0.0, 1.0),), np.zeros(1), np.eye(1))
    b = Chart("b", ((0.0, 1.0),), np.zeros(1), 2.0 * np.eye(1))
    rep = validate_uc(Atlas((a, b)), 0.5)
    assert not rep.ok


def test_validate_uc_ignores_disjoint_charts():
    a = Chart("a", ((0.0, 1.0),), np.array([0.0]), np.eye(1))
    b = Chart("b", ((0.0, 1.0),), np.array([2.5]), np.eye(1))  # no overlap
    rep = validate_uc(Atlas((a, b)), 0.4)
    assert rep.ok and rep.pairs == []


def test_validate_uc_rejects_bad_eps():
    atlas = single_chart_atlas(((0.0, 1.0),))
    with pytest.raises(ConfigurationError):
        validate_uc(atlas, 0.0)


def test_metric_identity_and_constant():
    g = MetricField.identity(2)
    pts = np.zeros((3, 2))
    np.testing.assert_allclose(g.matrix(pts), np.broadcast_to(np.eye(2), (3, 2, 2)))
    gc = MetricField.constant([[2.0, 0.5], [0.5, 1.0]])
    G, Ginv, sq = gc.metric_at([0.0, 0.0])
    np.testing.assert_allclose(G @ Ginv, np.eye(2), atol=1e-14)
    assert sq == pytest.approx(np.sqrt(1.75))


def test_metric_from_entries_expressions():
    g = MetricField.from_entries([["2 + x1", "0"], ["0", "1"]], 2)
    G = g.matrix(np.array([1.0, 0.0]))
    np.testing.assert_allclose(G, [[3.0, 0.0], [0.0, 1.0]])


def test_metric_rejects_asymmetry_and_non_spd():
    with pytest.raises(GeometryError):
        MetricField.constant([[1.0, 0.2], [0.3, 1.0]])
    g = MetricField.from_entries([["x1", "0"], ["0", "1"]], 2)
    with pytest.raises(GeometryError):
        g.matrix(np.array([-1.0, 0.0]))  # negative eigenvalue


def test_metric_min_eig_matches_numpy():
    g = MetricField.constant([[2.0, 0.7], [0.7, 1.0]])
    lam = g.min_eig(np.zeros((4, 2)))
    expect = np.linalg.eigvalsh(np.array([[2.0, 0.7], [0.7, 1.0]]))[0]
    np.testing.assert_allclose(lam, expect, atol=1e-14)


def test_metric_pushforward_congruence():
    g = MetricField.constant([[2.0, 0.5], [0.5, 1.0]])
    F = AffineMap(np.array([[0.0, 2.0], [1.0, 0.0]]), np.zeros(2))
    gz = g.pushforward(F)
    jinv = np.linalg.inv(F.matrix)
    expect = jinv.T @ np.array([[2.0, 0.5], [0.5, 1.0]]) @ jinv
    np.testing.assert_allclose(gz.matrix(np.array([1.0, 1.0])), expect, atol=1e-14)


def test_metric_pair_quadratic_form():
    g = MetricField.constant([[2.0, 0.0], [0.0, 3.0]])
    v = np.array([1.0, 1.0])
    assert metric_pair(g, v, v, np.zeros(2)) == pytest.approx(5.0)


def test_ramp_partition_sums_to_one():
    a = Chart("a", ((0.0, 0.625),), np.array([0.0]), np.eye(1))
    b = Chart("b", ((0.0, 0.625),), np.array([-0.375]), np.eye(1))
    atlas = Atlas((a, b))
    part = ramp_partition(atlas)
    # abstract overlap is [0.375, 0.625] in a's coordinates
    xa = np.linspace(0.0, 0.625, 101).reshape(-1, 1)
    xb = xa  # same image grid; b's points sit 0.375 later on the manifold
    wa = part["a"](xa)
    wb = part["b"](xb)
    assert np.all(wa >= 0) and np.all(wb >= 0)
    assert np.all(wa[xa[:, 0] <= 0.375] == 1.0)
    assert np.all(wb[xb[:, 0] + 0.375 >= 0.625] == 1.0)
    # on the overlap the two weights complement each other
    on = (xa[:, 0] >= 0.375) & (xa[:, 0] <= 0.625)
    np.testing.assert_allclose(wa[on] + part["b"]((xa - 0.375)[on]), 1.0,
                               atol=1e-14)


def test_ramp_partition_requires_overlap():
    a = Chart("a", ((0.0, 0.5),), np.array([0.0]), np.eye(1))
    b = Chart("b", ((0.0, 0.5),), np.array([-0.5]), np.eye(1))
    with pytest.raises(ConfigurationError):
        ramp_partition(Atlas((a, b)))
