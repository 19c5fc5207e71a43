"""Tests for the generalized-convexity sampling classifiers."""

import itertools
import json

import numpy as np
import pytest

from robustcert.convexity import (
    PSEUDO,
    STRICT,
    ConvexityWitness,
    check_generalized_quasi_convex,
    check_pseudo_convex,
    check_strictly_pseudo_convex,
    classify_type,
    dual_weight_grid,
    dyadic_lattice,
    revalidate_witness,
    _candidate_stream,
)
from robustcert.expr import Point
from robustcert.problem_io import load_problem, problem_from_dict
from robustcert.subdiff import limiting_subdiff

Z22 = np.array([0.0, -2.0])
Z32 = np.array([0.0, 1.0])


@pytest.fixture(scope="module")
def ex2_2():
    return load_problem("ex2_2")


@pytest.fixture(scope="module")
def ex2_3():
    return load_problem("ex2_3")


@pytest.fixture(scope="module")
def ex3_2():
    return load_problem("ex3_2")


@pytest.fixture(scope="module")
def cls22(ex2_2):
    return classify_type(ex2_2, Z22, samples=2000)


# ---------------------------------------------------------------------------
# sample stream
# ---------------------------------------------------------------------------


class TestDyadicLattice:
    def test_integer_points_come_first_row_major(self, ex2_2):
        lat = dyadic_lattice(ex2_2.box_lower, ex2_2.box_upper)
        pts = [next(lat) for _ in range(36)]
        # box [-2,2] x [-5,1]: 5 x 7 = 35 integer points, first axis slowest
        np.testing.assert_allclose(pts[0], [-2.0, -5.0])
        np.testing.assert_allclose(pts[1], [-2.0, -4.0])
        np.testing.assert_allclose(pts[23], [1.0, -3.0])
        np.testing.assert_allclose(pts[34], [2.0, 1.0])
        # the first refinement point has a half-integer coordinate
        np.testing.assert_allclose(pts[35], [-2.0, -4.5])

    def test_no_repeats(self, ex2_2):
        lat = dyadic_lattice(ex2_2.box_lower, ex2_2.box_upper)
        pts = [tuple(next(lat)) for _ in range(150)]
        assert len(set(pts)) == len(pts)

    def test_degenerate_axis_stays_pinned(self):
        lat = dyadic_lattice([0.0, 0.0], [0.0, 1.0])
        pts = [next(lat) for _ in range(5)]
        assert all(p[0] == 0.0 for p in pts)
        assert len({tuple(p) for p in pts}) == 5

    def test_stream_interleaves_lattice_every_fourth(self, ex2_2):
        stream = _candidate_stream(ex2_2, seed=0)
        cand = [next(stream) for _ in range(12)]
        np.testing.assert_allclose(cand[0], [-2.0, -5.0])
        np.testing.assert_allclose(cand[4], [-2.0, -4.0])
        np.testing.assert_allclose(cand[8], [-2.0, -3.0])
        for k in (1, 2, 3, 5, 6, 7):
            assert np.all(cand[k] >= ex2_2.box_lower - 1e-12)
            assert np.all(cand[k] <= ex2_2.box_upper + 1e-12)


def test_dual_weight_grid_orthant(ex2_2):
    Y = dual_weight_grid(ex2_2, edge=24)
    assert Y.shape == (325, 3)  # compositions of 24 into 3 parts
    assert np.all(Y >= -1e-15)
    np.testing.assert_allclose(Y.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(Y[0], [0.0, 0.0, 1.0], atol=0)


# ---------------------------------------------------------------------------
# fixture classifications
# ---------------------------------------------------------------------------


class TestPiecewiseLinearFixture:
    def test_first_bundle_survives(self, cls22):
        assert cls22.type_i.status == "not-refuted"
        assert cls22.type_i.witness is None
        assert cls22.type_i.samples_used == 2000

    def test_second_bundle_refuted_by_weighted_tie(self, cls22):
        v = cls22.type_ii
        assert v.status == "refuted"
        w = v.witness
        np.testing.assert_allclose(w.z, [-2.0, -4.0], atol=0)
        np.testing.assert_allclose(w.y, [0.0, 7.0 / 12.0, 5.0 / 12.0],
                                   atol=1e-12)
        assert w.part == "objectives"
        assert abs(w.delta) <= 1e-12       # exact weighted tie
        assert w.support >= -1e-12         # yet no strict decrease direction
        assert w.sample_index == 4         # second lattice point in the stream
        assert v.samples_used == 5

    def test_witness_revalidates_from_scratch(self, ex2_2, cls22):
        w = cls22.type_ii.witness
        f_ref = ex2_2.objective_values(Z22)
        f_wit = ex2_2.objective_values(w.z)
        delta = float((f_wit - f_ref) @ w.y)
        assert abs(delta) <= 1e-12
        step = w.z - Z22
        support = 0.0
        for j, f in enumerate(ex2_2.objectives):
            union = limiting_subdiff(f, Point.of(Z22), wrt="decision")
            V = np.vstack([p.vertices for p in union.pieces])
            support += w.y[j] * float(np.max(V @ step))
        assert support >= -1e-12

    def test_individual_checkers_agree(self, ex2_2, cls22):
        strict = check_strictly_pseudo_convex(ex2_2, Z22, samples=2000)
        assert strict.status == "refuted"
        np.testing.assert_allclose(strict.witness.z, cls22.type_ii.witness.z)
        pseudo = check_pseudo_convex(ex2_2, Z22, samples=2000)
        assert pseudo.status == "not-refuted"
        quasi = check_generalized_quasi_convex(ex2_2, Z22, samples=2000)
        assert quasi.status == "not-refuted"


class TestQuadraticFixture:
    def test_both_bundles_survive(self, ex2_3):
        cls = classify_type(ex2_3, Z22, samples=2000)
        assert cls.type_i.status == "not-refuted"
        assert cls.type_ii.status == "not-refuted"
        assert cls.type_i.witness is None
        assert cls.type_ii.witness is None
        assert cls.type_i.resolution == 24


def test_concave_kink_refutes_pseudo(ex3_2):
    # the third objective's negative kink in the second variable breaks
    # pseudo-convexity immediately at the first lattice corner
    v = check_pseudo_convex(ex3_2, Z32, samples=200)
    assert v.status == "refuted"
    w = v.witness
    np.testing.assert_allclose(w.z, [-4.0, -5.0], atol=0)
    np.testing.assert_allclose(w.y, [0.0, 0.0, 1.0], atol=0)
    assert w.sample_index == 0
    assert v.samples_used == 1
    assert w.delta == pytest.approx(1.0 / np.sqrt(5.0) - 7.0, abs=1e-12)
    assert w.support == pytest.approx(8.0, abs=1e-12)


def test_quasi_refuted_for_concave_binding_constraint():
    toy = problem_from_dict(
        {
            "decision_dim": 1,
            "uncertainty_dim": 1,
            "objectives": ["z1"],
            "constraints": ["-abs(z1) + 0*u1"],
            "uncertainty": {"type": "box", "lower": [-1], "upper": [1]},
            "cone": {"type": "orthant"},
            "box": {"lower": [-2], "upper": [2]},
        }
    )
    v = check_generalized_quasi_convex(toy, [0.0], samples=100)
    assert v.status == "refuted"
    w = v.witness
    assert w.part == "constraint 1"
    np.testing.assert_allclose(w.z, [-2.0], atol=0)
    assert w.delta == pytest.approx(-2.0, abs=1e-12)  # worst case decreased
    assert w.support == pytest.approx(2.0, abs=1e-12)  # hull still points up


def test_supplied_witness_revalidation(ex2_2):
    # an exact tie along the |z1| = -(z2 + 2) ray: joint value change is zero
    # while the weighted subgradients still reach the step direction
    good = ConvexityWitness(
        z=np.array([1.0, -3.0]), y=np.array([0.0, 1.4, 1.0]),
        part="objectives", delta=0.0, support=0.0, sample_index=-1,
    )
    revalidate_witness(ex2_2, Z22, good, STRICT)

    # the same point does not refute plain pseudo convexity (no strict
    # decrease in the premise), so the re-validation must reject it
    with pytest.raises(RuntimeError):
        revalidate_witness(ex2_2, Z22, good, PSEUDO)
    with pytest.raises(ValueError):
        revalidate_witness(ex2_2, Z22, good, "bogus")


def test_verdict_serialization_round_trip(cls22):
    blob = json.dumps(cls22.to_jsonable())
    back = json.loads(blob)
    assert back["type_i"]["status"] == "not-refuted"
    assert "witness" not in back["type_i"]
    wit = back["type_ii"]["witness"]
    assert wit["z"] == [-2.0, -4.0]
    assert wit["part"] == "objectives"
    assert back["type_ii"]["resolution"] == 24
