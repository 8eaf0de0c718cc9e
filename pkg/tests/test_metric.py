import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from homarea.algebra import SpecError, fixture, heisenberg
from homarea.metric import (
    Cone, HomogeneousDistance, dist_to_subgroup, estimate_c0, in_cone, make_distance,
    validate_homogeneous_distance,
)
from homarea.splitting import ComplementaryCouple, named_subgroups

from conftest import FIXTURE_NAMES


def test_norm_examples():
    h = heisenberg(1)
    d = HomogeneousDistance(h)
    assert d.norm([1, 0, 0]) == pytest.approx(1.0)
    assert d.norm([0, 0, 0]) == 0.0
    assert d.norm(h.dilate(3.0, [0, 0, 1])) == pytest.approx(3 * d.norm([0, 0, 1]))
    ck = make_distance(h, "cygan_koranyi")
    assert ck.norm([0, 0, 1]) == pytest.approx(2.0)
    assert ck.norm([3, 4, 0]) == pytest.approx(5.0)


def test_distance_zero_on_diagonal(alg, rng):
    d = HomogeneousDistance(alg)
    x = rng.normal(size=(20, alg.dim))
    assert np.allclose(d(x, x), 0, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.sampled_from(FIXTURE_NAMES), st.sampled_from(["d_inf", "cygan_koranyi"]), st.data())
def test_left_invariance_and_homogeneity(name, kind, data):
    alg = fixture(name)
    if kind == "cygan_koranyi" and name == "engel":
        return
    d = HomogeneousDistance(alg, kind)
    vec = arrays(float, alg.dim, elements=st.floats(-2, 2, allow_nan=False))
    x, y, z = data.draw(vec), data.draw(vec), data.draw(vec)
    t = data.draw(st.floats(0.1, 10))
    dxy = float(d(x, y))
    assert float(d(alg.multiply(z, x), alg.multiply(z, y))) == pytest.approx(dxy, rel=1e-8, abs=1e-8)
    assert float(d(alg.dilate(t, x), alg.dilate(t, y))) == pytest.approx(t * dxy, rel=1e-8, abs=1e-8)
    assert float(d(y, x)) == pytest.approx(dxy, rel=1e-8, abs=1e-8)


def test_cygan_koranyi_only_on_heisenberg():
    with pytest.raises(SpecError):
        HomogeneousDistance(fixture("engel"), "cygan_koranyi")


def test_builtin_distances_satisfy_triangle(alg):
    rep = validate_homogeneous_distance(HomogeneousDistance(alg), n=20000, seed=1)
    assert rep["triangle_violation"] <= 1e-12
    assert rep["left_invariance_residual"] < 1e-9
    assert rep["homogeneity_residual"] < 1e-9


def test_cygan_koranyi_has_no_violation():
    rep = validate_homogeneous_distance(make_distance(heisenberg(1), "ck"), n=20000, seed=2)
    assert rep["triangle_violation"] <= 1e-12


def test_heavy_vertical_weight_violates_triangle():
    d = make_distance(heisenberg(1), {"kind": "custom_homnorm", "params": {"weights": [1, 10], "power": 2}})
    rep = validate_homogeneous_distance(d, n=20000, seed=3)
    assert rep["triangle_violation"] > 0.1
    x, y, z = (np.array(p) for p in rep["worst_triple"])
    assert d(x, z) > d(x, y) + d(y, z)


def test_validate_zero_samples():
    assert validate_homogeneous_distance(HomogeneousDistance(heisenberg(1)), n=0) == {}


def test_custom_callable_needs_bounds():
    h = heisenberg(1)
    with pytest.raises(SpecError):
        HomogeneousDistance(h, "custom_homnorm", norm_fn=lambda x: np.abs(x).sum(-1))
    with pytest.raises(SpecError):
        HomogeneousDistance(h, "custom_homnorm")


def test_layer_bounds_contain_ball(alg, rng):
    d = HomogeneousDistance(alg)
    x = rng.uniform(-3, 3, (20000, alg.dim))
    x = x[d.norm(x) <= 1.0]
    bounds = d.layer_bounds(1.0)
    for s in range(1, alg.step + 1):
        assert np.linalg.norm(x[:, alg.layer_slice(s)], axis=1).max() <= bounds[s - 1] + 1e-12


def test_distance_to_subgroup_and_cone():
    h = heisenberg(1)
    d = HomogeneousDistance(h)
    W = named_subgroups(h)["vertical"].basis
    # x^-1 (0,y,t) = (-1, y, t - y/2) has d_inf norm >= 1, attained at y = t = 0
    val, _ = dist_to_subgroup(d, [1, 0, 0], W)
    assert val == pytest.approx(1.0, abs=1e-8)
    cone = Cone(np.zeros(3), W, 0.5)
    assert not in_cone([1, 0, 0], cone, d)
    assert in_cone([0, 0.3, -0.2], cone, d)
    assert in_cone(np.zeros(3), cone, d)
    with pytest.raises(ValueError):
        Cone(np.zeros(3), W, 1.5)


def _c0_grid_oracle():
    # w = (0, y, t), v = (x, 0, 0): w v = (x, y, t - x y / 2); the ratio is dilation invariant
    g = np.linspace(-1, 1, 241)
    x, y, t = np.meshgrid(g, g, g, indexing="ij")
    num = np.maximum(np.hypot(x, y), np.sqrt(np.abs(t - x * y / 2)))
    den = np.abs(x) + np.maximum(np.abs(y), np.sqrt(np.abs(t)))
    ok = (den > 0) & (np.abs(x) > 0)
    return float((num[ok] / den[ok]).min())


def test_estimate_c0_against_grid_oracle():
    h = heisenberg(1)
    subs = named_subgroups(h)
    couple = ComplementaryCouple(subs["vertical"], subs["horizontal"])
    d = HomogeneousDistance(h)
    oracle = _c0_grid_oracle()
    values = [estimate_c0(couple, d, n=20000, seed=s)["value"] for s in range(3)]
    for v in values:
        assert 0 < v <= 1.0
        assert abs(v - oracle) / oracle <= 0.05
    assert (max(values) - min(values)) / min(values) <= 0.05


def test_estimate_c0_rejects_trivial_factor():
    h = heisenberg(1)

    class Fake:
        def __init__(self, dim):
            self.dim = dim

    class FakeCouple:
        W, V = Fake(3), Fake(0)

    with pytest.raises(SpecError):
        estimate_c0(FakeCouple(), HomogeneousDistance(h))
