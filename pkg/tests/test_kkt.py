"""Tests for robust first-order certificates: search, verification, CQ."""

import itertools
import json

import numpy as np
import pytest

from robustcert.constraints import ACTIVE_TOL, GRID_DEFAULT
from robustcert.expr import Point
from robustcert.kkt import (
    KktCertificate,
    KktOptions,
    NotFoundAtResolution,
    _prefilter,
    _prepare,
    _simplex_indices,
    check_cq,
    check_proper_necessary,
    find_kkt_certificate,
    verify_certificate,
)
from robustcert.polytope import Polytope, PolytopeUnion
from robustcert.problem_io import load_problem, problem_from_dict
from robustcert.subdiff import limiting_subdiff

from oracles import min_norm_in_sum

SQRT2 = np.sqrt(2.0)
Z_REF = np.array([0.0, 1.0])


@pytest.fixture(scope="module")
def ex3_2():
    return load_problem("ex3_2")


@pytest.fixture(scope="module")
def ex3_3():
    return load_problem("ex3_3")


@pytest.fixture(scope="module")
def ref_cert(ex3_2):
    return find_kkt_certificate(ex3_2, Z_REF)


def toy_problem(objective, constraint):
    return problem_from_dict(
        {
            "decision_dim": 1,
            "uncertainty_dim": 1,
            "objectives": [objective],
            "constraints": [constraint],
            "uncertainty": {"type": "box", "lower": [-1], "upper": [1]},
            "cone": {"type": "orthant"},
            "box": {"lower": [-2], "upper": [2]},
        }
    )


# ---------------------------------------------------------------------------
# constraint qualification
# ---------------------------------------------------------------------------


class TestConstraintQualification:
    def test_holds_at_reference_point(self, ex3_2):
        rep = check_cq(ex3_2, Z_REF)
        assert rep.satisfied
        assert not rep.trivial
        assert rep.active_indices == [0]
        # hull is the segment [1,2] x {0}; nearest point to the origin is (1,0)
        assert rep.distance == pytest.approx(1.0, abs=1e-9)

    def test_trivial_when_nothing_binds(self, ex3_2):
        rep = check_cq(ex3_2, np.array([-1.0, 0.0]))
        assert rep.satisfied
        assert rep.trivial
        assert rep.active_indices == []
        assert rep.distance == np.inf

    def test_fails_when_zero_enters_hull(self):
        toy = toy_problem("z1", "abs(z1) + 0*u1")
        rep = check_cq(toy, [0.0])
        assert not rep.satisfied
        assert rep.active_indices == [0]
        assert rep.distance <= 1e-12


# ---------------------------------------------------------------------------
# direction grid
# ---------------------------------------------------------------------------


class TestDirectionGrid:
    def test_three_weight_scan_order(self):
        rows = _simplex_indices(3, 4)
        assert np.all(rows.sum(axis=1) == 4)
        # the second index is the slowest coordinate, the first the fastest
        expected_prefix = [
            (0, 0, 4), (1, 0, 3), (2, 0, 2), (3, 0, 1), (4, 0, 0),
            (0, 1, 3), (1, 1, 2),
        ]
        assert [tuple(r) for r in rows[: len(expected_prefix)]] == expected_prefix

    def test_two_weight_scan_order(self):
        rows = _simplex_indices(2, 3)
        assert [tuple(r) for r in rows] == [(0, 3), (1, 2), (2, 1), (3, 0)]

    def test_single_weight(self):
        assert [tuple(r) for r in _simplex_indices(1, 7)] == [(7,)]

    def test_prefilter_blocks_small_first_weight(self, ex3_2):
        # with no weight on the second objective, the second coordinate of the
        # stationarity sum can only vanish when the first weight dominates the
        # third; the interval prefilter must discover this
        data = _prepare(ex3_2, Z_REF, ACTIVE_TOL, GRID_DEFAULT)
        indices = _simplex_indices(3, 720)
        Y = indices.astype(float) / 720
        keep = _prefilter(Y, data, 2)
        assert not keep[:360].any()
        assert keep[360]


# ---------------------------------------------------------------------------
# certificate search
# ---------------------------------------------------------------------------


class TestFindCertificate:
    def test_reproduces_reference_certificate(self, ref_cert):
        np.testing.assert_allclose(
            ref_cert.y_star, [SQRT2 / 4, 0.0, SQRT2 / 4], atol=1e-9
        )
        np.testing.assert_allclose(ref_cert.mu, [0.5, 0.0], atol=1e-9)
        assert ref_cert.residual <= 1e-8
        assert ref_cert.mode == "outer"
        assert not ref_cert.fritz_john
        assert not ref_cert.fritz_john_also

    def test_normalization_identity(self, ref_cert):
        total = np.linalg.norm(ref_cert.y_star) + np.linalg.norm(ref_cert.mu)
        assert total == pytest.approx(1.0, abs=1e-12)

    def test_witnesses_attached_to_binding_constraint(self, ref_cert):
        assert len(ref_cert.witnesses) == 2
        first = ref_cert.witnesses[0]
        assert len(first) == 1
        assert abs(first[0][0]) <= 1e-6  # worst case of g1 at u = 0
        assert ref_cert.witnesses[1] == []  # slack constraint carries none

    def test_exact_scalarization_mode_agrees(self, ex3_2, ref_cert):
        cert = find_kkt_certificate(ex3_2, Z_REF, KktOptions(mode="exact"))
        assert cert.mode == "exact"
        np.testing.assert_allclose(cert.y_star, ref_cert.y_star, atol=1e-9)
        np.testing.assert_allclose(cert.mu, ref_cert.mu, atol=1e-9)
        assert cert.residual <= 1e-8

    def test_fritz_john_fallback(self):
        # objective slope never cancels, but the flat constraint supports a
        # zero-weight combination
        toy = toy_problem("z1", "0*z1*u1")
        cert = find_kkt_certificate(toy, [0.0], KktOptions(y_grid=25))
        assert cert.fritz_john
        np.testing.assert_allclose(cert.y_star, [0.0], atol=1e-12)
        np.testing.assert_allclose(cert.mu, [1.0], atol=1e-9)
        assert cert.residual <= 1e-12
        rep = verify_certificate(toy, [0.0], cert)
        assert rep.ok

    def test_not_found_reports_nearest_direction(self, ex3_2):
        # interior smooth point: all subdifferentials are singletons and no
        # grid direction solves the stationarity system exactly
        with pytest.raises(NotFoundAtResolution) as exc:
            find_kkt_certificate(ex3_2, np.array([-1.0, 0.0]))
        err = exc.value
        assert 0.0 < err.best_residual < 0.1
        np.testing.assert_allclose(
            err.best_direction, np.array([2.0, 5.0, 17.0]) / 24.0, atol=1e-9
        )
        assert "721" in str(err)

    def test_options_validated(self, ex3_2):
        with pytest.raises(ValueError):
            find_kkt_certificate(ex3_2, Z_REF, KktOptions(y_grid=1))
        with pytest.raises(ValueError):
            find_kkt_certificate(ex3_2, Z_REF, KktOptions(mode="bogus"))


# ---------------------------------------------------------------------------
# verification
# ---------------------------------------------------------------------------


class TestVerifyCertificate:
    def test_accepts_found_certificate(self, ex3_2, ref_cert):
        rep = verify_certificate(ex3_2, Z_REF, ref_cert)
        assert rep.ok
        assert all(rep.checks.values())
        assert rep.stationarity_distance <= 1e-8

    def test_flags_broken_multiplier(self, ex3_2, ref_cert):
        bad = KktCertificate(
            ref_cert.y_star, np.array([0.1, 0.0]), ref_cert.witnesses,
            0.0, "outer",
        )
        rep = verify_certificate(ex3_2, Z_REF, bad)
        assert not rep.ok
        assert not rep.checks["stationarity"]
        assert not rep.checks["normalization"]
        # nearest stationarity gap: first coordinate misses by 3*sqrt(2)/8 - 0.2
        assert rep.stationarity_distance == pytest.approx(
            3 * SQRT2 / 8 - 0.2, abs=1e-9
        )

    def test_flags_false_complementarity(self, ex3_2, ref_cert):
        bad = KktCertificate(
            ref_cert.y_star, np.array([0.5, 0.15]), ref_cert.witnesses,
            0.0, "outer",
        )
        rep = verify_certificate(ex3_2, Z_REF, bad)
        assert not rep.ok
        # second constraint has worst case -1, so 0.15 * (-1) breaks it
        assert not rep.checks["complementarity"]
        assert not rep.checks["witnesses"]  # no witness for the new support

    def test_flags_non_attaining_witness(self, ex3_2, ref_cert):
        bad = KktCertificate(
            ref_cert.y_star, ref_cert.mu,
            [[np.array([0.9])], []], ref_cert.residual, "outer",
        )
        rep = verify_certificate(ex3_2, Z_REF, bad)
        assert not rep.ok
        assert not rep.checks["witnesses"]
        assert rep.checks["stationarity"]

    def test_distance_matches_independent_oracle(self, ex3_2, ref_cert):
        # same quantity by a completely different route: SLSQP minimization of
        # the norm over explicit Minkowski-sum convex weights
        data = _prepare(ex3_2, Z_REF, ACTIVE_TOL, GRID_DEFAULT)
        for mu1 in (0.5, 0.1):
            bad = KktCertificate(
                ref_cert.y_star, np.array([mu1, 0.0]), ref_cert.witnesses,
                0.0, "outer",
            )
            rep = verify_certificate(ex3_2, Z_REF, bad)
            best = np.inf
            piece_counts = [len(s.pieces) for s in data.obj_subdiffs]
            for sel in itertools.product(*(range(c) for c in piece_counts)):
                sets = [
                    ref_cert.y_star[j] * data.obj_subdiffs[j].pieces[sel[j]].vertices
                    for j in range(3)
                    if ref_cert.y_star[j] > 0
                ]
                sets.append(mu1 * data.hulls[0].vertices)
                best = min(best, min_norm_in_sum(sets))
            assert abs(best - rep.stationarity_distance) <= 1e-6


# ---------------------------------------------------------------------------
# set readings for disconnected attaining gradients
# ---------------------------------------------------------------------------


def test_convexified_and_union_readings_differ():
    # a pair of attaining gradients admits two readings: the union of the two
    # points and their convex hull; the multiplier combination uses the hull,
    # which strictly enlarges what stationarity can absorb
    pair = [Polytope([[-3.0, 1.0]]), Polytope([[3.0, 1.0]])]
    union = PolytopeUnion(pair)
    hull = union.hull()
    shift = np.array([0.0, -1.0])
    assert hull.translate(shift).contains(np.zeros(2))
    shifted_union = PolytopeUnion([p.translate(shift) for p in pair])
    assert shifted_union.distance(np.zeros(2)) == pytest.approx(3.0, abs=1e-9)


# ---------------------------------------------------------------------------
# certificate serialization
# ---------------------------------------------------------------------------


def test_certificate_json_round_trip(ref_cert):
    blob = json.dumps(ref_cert.to_jsonable())
    back = KktCertificate.from_jsonable(json.loads(blob))
    np.testing.assert_allclose(back.y_star, ref_cert.y_star, atol=0)
    np.testing.assert_allclose(back.mu, ref_cert.mu, atol=0)
    assert back.mode == ref_cert.mode
    assert back.fritz_john == ref_cert.fritz_john
    assert back.fritz_john_also == ref_cert.fritz_john_also
    assert back.residual == ref_cert.residual
    assert len(back.witnesses) == len(ref_cert.witnesses)
    np.testing.assert_allclose(back.witnesses[0][0], ref_cert.witnesses[0][0])


# ---------------------------------------------------------------------------
# necessary side of proper behavior
# ---------------------------------------------------------------------------


class TestProperNecessary:
    def test_reference_weights_minimize_scalarization(self, ex3_3):
        y_star = np.array([0.2, 0.2, SQRT2 / 5])
        rep = check_proper_necessary(ex3_3, Z_REF, y_star, grid=41)
        assert rep.ok
        assert abs(rep.min_value) <= 1e-9  # attained at the point itself
        assert rep.interior_margin == pytest.approx(0.2, abs=1e-12)
        assert rep.feasible_points > 100

    def test_boundary_weights_rejected(self, ex3_3):
        rep = check_proper_necessary(ex3_3, Z_REF, [1.0, 0.0, 0.0], grid=21)
        assert not rep.ok
        assert rep.interior_margin == pytest.approx(0.0, abs=1e-12)
