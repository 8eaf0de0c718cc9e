import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from homarea.algebra import (
    BCH_TERMS, GradedAlgebra, SpecError, algebra_from_dict, engel, fixture, heisenberg,
    load_spec_file, validate_spec,
)
from oracles import MatrixGroup

from conftest import FIXTURE_NAMES

coords = st.floats(-3, 3, allow_nan=False, allow_infinity=False)


def test_fixtures_are_valid(alg):
    assert validate_spec(alg).ok
    assert alg.validate().ok


def test_antisymmetry_violation_reported():
    # c_12^3 = 1 and c_21^3 = 1 cannot both hold: the constructor refuses
    with pytest.raises(SpecError, match="conflicting"):
        GradedAlgebra([2, 1], [(1, 2, 3, 1.0), (2, 1, 3, 1.0)])


def test_antisymmetry_violation_in_raw_table():
    alg = heisenberg(1)
    bad = alg.structure.copy()
    bad[1, 0, 2] = 1.0
    object.__setattr__(alg, "structure", bad)
    rep = validate_spec(alg)
    assert not rep.ok
    assert rep.violations[0]["kind"] == "antisymmetry"
    assert (rep.violations[0]["i"], rep.violations[0]["j"], rep.violations[0]["k"]) == (1, 2, 3)


def test_grading_violation():
    alg = GradedAlgebra([2, 1], [(1, 2, 1, 1.0)])
    kinds = {v["kind"] for v in validate_spec(alg).violations}
    assert "grading" in kinds


def test_jacobi_violation():
    # [e1,e2]=e4, [e3,e4]=e5: the cyclic sum on (1,2,3) is [e3,[e1,e2]] = e5
    alg = GradedAlgebra([3, 1, 1], [(1, 2, 4, 1.0), (3, 4, 5, 1.0)])
    viol = validate_spec(alg).violations
    assert [(v["kind"], v["i"], v["j"], v["k"]) for v in viol] == [("jacobi", 1, 2, 3)]


def test_step_limit():
    with pytest.raises(SpecError, match="step"):
        GradedAlgebra([1] * 7)


def test_bch_table_low_degrees():
    assert BCH_TERMS[2] == (("xy", Fraction(1, 2)),)
    assert dict(BCH_TERMS[3]) == {"xxy": Fraction(1, 12), "yxy": Fraction(-1, 12)}
    assert max(BCH_TERMS) == 6


def test_bracket_examples():
    h = heisenberg(1)
    assert np.allclose(h.bracket([1, 0, 0], [0, 1, 0]), [0, 0, 1])
    x = np.array([0.3, -1.2, 2.0])
    assert np.allclose(h.bracket(x, x), 0)
    e = engel()
    assert np.allclose(e.bracket(e.basis(1), e.basis(3)), e.basis(4))


def test_multiply_examples():
    h = heisenberg(1)
    assert np.allclose(h.multiply([1, 0, 0], [0, 1, 0]), [1, 1, 0.5])
    e = engel()
    assert np.allclose(e.multiply(e.basis(1), e.basis(2)), [1, 1, 0.5, 1 / 12])


def test_identity_inverse_examples(alg, rng):
    x = rng.normal(size=alg.dim)
    assert np.allclose(alg.multiply(x, np.zeros(alg.dim)), x)
    assert np.allclose(alg.multiply(x, alg.inverse(x)), 0, atol=1e-12)
    assert np.allclose(heisenberg(1).inverse([1, 2, 3]), [-1, -2, -3])


def test_dilation_examples():
    h = heisenberg(1)
    assert np.allclose(h.dilate(2.0, [1, 1, 1]), [2, 2, 4])
    x = np.array([0.1, 0.2, 0.3])
    assert np.array_equal(h.dilate(1.0, x), x)
    with pytest.raises(ValueError):
        h.dilate(0.0, x)
    with pytest.raises(ValueError):
        h.dilate(-1.0, x)


def test_layer_project_examples():
    h = heisenberg(1)
    assert np.allclose(h.layer_project(1, [1, 2, 3]), [1, 2, 0])
    assert np.allclose(h.layer_project(2, [1, 2, 3]), [1, 2, 3])
    assert np.allclose(engel().layer_project(2, [1, 1, 1, 1]), [1, 1, 1, 0])


def test_left_invariant_field_heisenberg():
    h = heisenberg(1)
    g = np.array([0.7, -0.4, 2.0])
    assert np.allclose(h.left_invariant_field(2, g), [0, 1, 0.35])
    assert np.allclose(h.left_invariant_field(1, np.zeros(3)), [1, 0, 0])
    assert np.allclose(h.left_invariant_field(3, g), [0, 0, 1])


@pytest.mark.parametrize("name", FIXTURE_NAMES)
def test_left_invariant_field_matches_finite_difference(name):
    alg = fixture(name)
    rng = np.random.default_rng(1)
    g = rng.normal(size=alg.dim)
    for j in range(1, alg.dim + 1):
        h = 1e-6
        fd = (alg.multiply(g, h * alg.basis(j)) - alg.multiply(g, -h * alg.basis(j))) / (2 * h)
        assert np.allclose(alg.left_invariant_field(j, g), fd, atol=1e-7)


@pytest.mark.parametrize("name", FIXTURE_NAMES)
def test_matrix_oracle_represents_fixture(name):
    assert MatrixGroup(name).representation_residual(fixture(name)) == 0.0


@pytest.mark.parametrize("name", FIXTURE_NAMES)
def test_multiply_matches_matrix_oracle(name):
    alg, oracle = fixture(name), MatrixGroup(name)
    rng = np.random.default_rng(7)
    x, y = rng.normal(size=(2, 500, alg.dim))
    assert np.abs(alg.multiply(x, y) - oracle.multiply(x, y)).max() < 1e-12
    assert np.abs(alg.bracket(x[0], y[0]) - oracle.bracket(x[0], y[0])).max() < 1e-12


def test_step_six_bch_against_matrix_exponentials():
    # free-ish filiform algebra of step 6 realised by 7x7 shift matrices
    n = 7
    layers = [2, 1, 1, 1, 1, 1]
    brackets = [(1, 2, 3, 1.0)] + [(1, k, k + 1, 1.0) for k in range(3, 7)]
    alg = GradedAlgebra(layers, brackets)
    assert validate_spec(alg).ok
    S = np.diag(np.ones(n - 1), 1)
    mats = [S.copy(), None]
    E = np.zeros((n, n))
    E[n - 2, n - 1] = 1.0
    mats[1] = E
    for _ in range(5):
        a = mats[0] @ mats[-1] - mats[-1] @ mats[0]
        mats.append(a)
    mats = np.array(mats)

    def to_m(x):
        return np.tensordot(x, mats, axes=(-1, 0))

    def expm(X):
        out, term = np.eye(n), np.eye(n)
        for k in range(1, n):
            term = term @ X / k
            out = out + term
        return out

    def logm(G):
        N, out, term = G - np.eye(n), np.zeros((n, n)), np.eye(n)
        for k in range(1, n):
            term = term @ N
            out = out + (-1) ** (k + 1) / k * term
        return out

    flat = mats.reshape(len(mats), -1).T
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(50):
        x, y = rng.normal(size=(2, alg.dim))
        ref = np.linalg.lstsq(flat, logm(expm(to_m(x)) @ expm(to_m(y))).ravel(), rcond=None)[0]
        worst = max(worst, np.abs(alg.multiply(x, y) - ref).max())
    assert worst < 1e-10


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(FIXTURE_NAMES), st.data())
def test_group_axioms_property(name, data):
    alg = fixture(name)
    vec = arrays(float, alg.dim, elements=coords)
    x, y, z = data.draw(vec), data.draw(vec), data.draw(vec)
    t = data.draw(st.floats(0.05, 20))
    lhs = alg.multiply(alg.multiply(x, y), z)
    rhs = alg.multiply(x, alg.multiply(y, z))
    assert np.allclose(lhs, rhs, atol=1e-8 * max(1, np.abs(lhs).max()))
    assert np.allclose(alg.dilate(t, alg.multiply(x, y)), alg.multiply(alg.dilate(t, x), alg.dilate(t, y)),
                       rtol=1e-9, atol=1e-9 * t**alg.step)
    assert np.allclose(alg.multiply(alg.inverse(x), x), 0, atol=1e-12)


def test_spec_roundtrip(tmp_path):
    e = engel()
    doc = e.to_json()
    path = tmp_path / "g.json"
    path.write_text(json.dumps(doc))
    again = algebra_from_dict(load_spec_file(path))
    assert np.array_equal(again.structure, e.structure)
    with pytest.raises(SpecError):
        algebra_from_dict({"brackets": []})
    with pytest.raises(SpecError):
        fixture("nope")


def test_hausdorff_dimension():
    assert heisenberg(1).hausdorff_dim == 4
    assert heisenberg(2).hausdorff_dim == 6
    assert engel().hausdorff_dim == 7
