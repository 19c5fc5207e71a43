"""Dual triples for the worst-case problem and duality diagnostics.

A dual triple bundles a decision-space point with objective weights from the
dual cone and nonnegative constraint multipliers.  Feasibility of a triple
requires stationarity of the weighted subdifferential combination at the
triple's point and a sign condition on the multiplier-weighted constraint
values there.

The sign condition has two readings.  The default one evaluates each
constraint at its worst-case attaining realizations (the same witnesses a
certificate carries); the strict one demands the signed product stay
nonnegative for every realization on the uncertainty grid.  The readings
genuinely differ: a triple built from a certificate is feasible under the
default reading but can fail the strict one when a binding constraint dips
negative away from its worst case.

``weak_duality_test`` scans the feasible primal grid for value vectors that
improperly dominate the triple's value vector; ``strong_duality_construct``
turns a certificate into a triple; ``converse_duality_check`` confirms that a
feasible triple point is weakly efficient by brute force.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from .constraints import (
    ACTIVE_TOL,
    FEAS_TOL,
    GRID_DEFAULT,
    Problem,
    active_uncertainty,
    is_robust_feasible,
    worst_case_subdiff,
    worst_case_value,
)
from .efficiency import (
    EFFICIENCY_GRID,
    EfficiencyContext,
    _dominator_mask,
    certify_weak,
    grid_context,
)
from .expr import Point, eval_broadcast
from .kkt import MU_ZERO_TOL, RESIDUAL_TOL, KktCertificate, _residual
from .polytope import Polytope
from .subdiff import limiting_subdiff


@dataclass
class DualTriple:
    point: np.ndarray        # decision-space dual point
    weights: np.ndarray      # objective weights in the dual cone
    multipliers: np.ndarray  # nonnegative constraint multipliers

    def to_jsonable(self) -> dict:
        return {
            "y": [float(v) for v in self.point],
            "y_star": [float(v) for v in self.weights],
            "mu": [float(v) for v in self.multipliers],
        }

    @staticmethod
    def from_jsonable(data: dict) -> "DualTriple":
        return DualTriple(
            point=np.asarray(data["y"], dtype=float),
            weights=np.asarray(data["y_star"], dtype=float),
            multipliers=np.asarray(data["mu"], dtype=float),
        )


@dataclass
class DualFeasibilityReport:
    feasible: bool
    mode: str
    checks: Dict[str, bool]
    stationarity_distance: float
    sign_values: List[float]

    def to_jsonable(self) -> dict:
        return {
            "feasible": bool(self.feasible),
            "mode": self.mode,
            "checks": {k: bool(v) for k, v in self.checks.items()},
            "stationarity_distance": float(self.stationarity_distance),
            "sign_values": [float(v) for v in self.sign_values],
        }


def _min_over_uncertainty(P: Problem, i: int, w: np.ndarray,
                          grid: int) -> float:
    """Smallest constraint value over the uncertainty grid at a fixed point."""
    U = P.uncertainty
    if U.dim == 0:
        return float(
            eval_broadcast(P.constraints[i], [np.asarray(v) for v in w])
        )
    pts = U.grid_points(grid)
    cols_z = [np.asarray(w[j]) for j in range(len(w))]
    cols_u = [pts[:, k] for k in range(U.dim)]
    vals = np.broadcast_to(
        eval_broadcast(P.constraints[i], cols_z, cols_u), (len(pts),)
    )
    return float(vals.min())


def is_dual_feasible(P: Problem, triple: DualTriple, mode: str = "default",
                     tol: float = RESIDUAL_TOL,
                     grid: int = GRID_DEFAULT) -> DualFeasibilityReport:
    if mode not in ("default", "strict"):
        raise ValueError("mode must be 'default' or 'strict'")
    w = np.asarray(triple.point, dtype=float)
    y = np.asarray(triple.weights, dtype=float)
    mu = np.asarray(triple.multipliers, dtype=float)
    d = P.decision_dim
    checks: Dict[str, bool] = {}

    subdiffs = [limiting_subdiff(f, Point.of(w), wrt="decision")
                for f in P.objectives]
    hulls: Dict[int, Polytope] = {}
    for i in range(P.n_constraints):
        if mu[i] > MU_ZERO_TOL:
            hulls[i] = worst_case_subdiff(
                P.constraints[i], w, P.uncertainty, ACTIVE_TOL, grid
            ).hull()
    distance = _residual(y, subdiffs, mu, hulls, d)
    checks["stationarity"] = distance <= tol

    sign_values: List[float] = []
    for i in range(P.n_constraints):
        if mu[i] <= MU_ZERO_TOL:
            sign_values.append(0.0)
            continue
        if mode == "default":
            value = worst_case_value(P.constraints[i], w, P.uncertainty, grid)
        else:
            value = _min_over_uncertainty(P, i, w, grid)
        sign_values.append(float(mu[i] * value))
    checks["sign"] = all(v >= -tol for v in sign_values)

    checks["dual_cone"] = P.cone.dual_contains(y, 1e-9)
    checks["weights_nonzero"] = bool(np.max(np.abs(y), initial=0.0) > 1e-9)
    checks["mu_nonnegative"] = bool(np.all(mu >= -MU_ZERO_TOL))

    return DualFeasibilityReport(
        all(checks.values()), mode, checks, float(distance), sign_values
    )


# ---------------------------------------------------------------------------
# weak duality
# ---------------------------------------------------------------------------


@dataclass
class WeakDualityReport:
    holds: bool
    kind: str
    grid: int
    checked_points: int
    first_violation: Optional[np.ndarray] = None
    violation_values: Optional[np.ndarray] = None

    def to_jsonable(self) -> dict:
        out = {
            "holds": bool(self.holds),
            "kind": self.kind,
            "grid": self.grid,
            "checked_points": self.checked_points,
        }
        if self.first_violation is not None:
            out["first_violation"] = [float(v) for v in self.first_violation]
            out["violation_values"] = [float(v) for v in self.violation_values]
        return out


def weak_duality_test(P: Problem, triple: DualTriple, kind: str = "typeI",
                      grid: int = EFFICIENCY_GRID, ugrid: int = GRID_DEFAULT,
                      context: Optional[EfficiencyContext] = None
                      ) -> WeakDualityReport:
    """Scan feasible grid values for forbidden domination of the dual value.

    Under the first premise bundle no feasible value vector may improve on
    the triple's value vector strictly in every direction (``typeI``); under
    the strict bundle even a one-sided improvement with ties is forbidden
    (``typeII``).
    """
    if kind not in ("typeI", "typeII"):
        raise ValueError("kind must be 'typeI' or 'typeII'")
    ctx = context if context is not None else grid_context(P, grid, ugrid)
    w_vals = P.objective_values(triple.point)
    D = ctx.F - w_vals[None, :]
    mask = _dominator_mask(P, D, strict=(kind == "typeI"))
    hits = np.flatnonzero(mask)
    if len(hits) == 0:
        return WeakDualityReport(True, kind, ctx.grid, len(ctx.Z))
    first = int(hits[0])
    return WeakDualityReport(
        False, kind, ctx.grid, len(ctx.Z),
        first_violation=ctx.Z[first], violation_values=ctx.F[first],
    )


# ---------------------------------------------------------------------------
# strong and converse duality
# ---------------------------------------------------------------------------


def strong_duality_construct(P: Problem, z, cert: KktCertificate
                             ) -> DualTriple:
    """Promote a certificate at a point to a dual triple at that same point.

    The construction realizes strong duality: the triple's value vector
    coincides with the primal value vector by definition, and feasibility
    under the default sign reading follows from complementarity.
    """
    return DualTriple(
        point=np.asarray(z, dtype=float),
        weights=np.asarray(cert.y_star, dtype=float),
        multipliers=np.asarray(cert.mu, dtype=float),
    )


@dataclass
class ConverseDualityReport:
    applicable: bool          # triple is dual feasible and its point primal feasible
    weakly_efficient: bool    # brute-force grid verdict at the triple's point
    consistent: bool          # applicable implies weakly efficient
    feasibility: DualFeasibilityReport

    def to_jsonable(self) -> dict:
        return {
            "applicable": bool(self.applicable),
            "weakly_efficient": bool(self.weakly_efficient),
            "consistent": bool(self.consistent),
            "feasibility": self.feasibility.to_jsonable(),
        }


def converse_duality_check(P: Problem, triple: DualTriple,
                           grid: int = EFFICIENCY_GRID,
                           ugrid: int = GRID_DEFAULT,
                           context: Optional[EfficiencyContext] = None
                           ) -> ConverseDualityReport:
    rep = is_dual_feasible(P, triple, mode="default", grid=ugrid)
    applicable = rep.feasible and is_robust_feasible(
        P, triple.point, FEAS_TOL, ugrid
    )
    weak = certify_weak(P, triple.point, grid, ugrid, context=context)
    weakly_efficient = bool(weak.certified)
    consistent = (not applicable) or weakly_efficient
    return ConverseDualityReport(applicable, weakly_efficient, consistent, rep)
