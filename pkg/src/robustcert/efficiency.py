"""Brute-force certification of robust efficiency concepts on a box grid.

A feasible point is *weakly* efficient when no feasible competitor improves
every objective strictly (cone-interior domination), *efficient* when no
competitor improves the objective vector in the cone ordering without tying
it, and *properly* efficient when some uniformly interior dual weight vector
makes the point a scalar minimizer.  The certifiers here check these
statements exhaustively over a finite decision grid; "certified" therefore
always means "no counterexample at this resolution", not a continuum proof.

``sufficient_conditions`` combines a verified first-order certificate with
the sampling-based convexity classification to state which efficiency
concepts follow from the supported sufficiency rules.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy.optimize import linprog

from .constraints import FEAS_TOL, GRID_DEFAULT, Problem, worst_case_values_batch
from .convexity import TypeClassification
from .kkt import KktCertificate, VerificationReport

# strict componentwise improvement must clear this margin
DOMINANCE_TOL = 1e-9
# interior weight floor for the proper-efficiency scalarization
PROPER_EPS = 1e-3

EFFICIENCY_GRID = 101


@dataclass
class EfficiencyContext:
    """Precomputed grid data reusable across certifications of one problem."""

    Z: np.ndarray                # feasible grid rows
    F: np.ndarray                # objective values at those rows
    grid: int
    total_points: int


def grid_context(P: Problem, grid: int = EFFICIENCY_GRID,
                 ugrid: int = GRID_DEFAULT) -> EfficiencyContext:
    Z = P.box_grid(grid)
    feas = np.ones(len(Z), dtype=bool)
    for g in P.constraints:
        feas &= worst_case_values_batch(g, Z, P.uncertainty, ugrid) <= FEAS_TOL
    Zf = Z[feas]
    return EfficiencyContext(Zf, P.objective_values_batch(Zf), grid, len(Z))


@dataclass
class EfficiencyReport:
    concept: str                  # 'weak' | 'efficient' | 'proper'
    certified: bool
    grid: int
    feasible_points: int
    counterexample: Optional[np.ndarray] = None
    counterexample_values: Optional[np.ndarray] = None
    witness_y: Optional[np.ndarray] = None
    notes: Tuple[str, ...] = ()

    def to_jsonable(self) -> dict:
        out = {
            "concept": self.concept,
            "certified": bool(self.certified),
            "grid": self.grid,
            "feasible_points": self.feasible_points,
        }
        if self.counterexample is not None:
            out["counterexample"] = [float(v) for v in self.counterexample]
            out["counterexample_values"] = [
                float(v) for v in self.counterexample_values
            ]
        if self.witness_y is not None:
            out["witness_y"] = [float(v) for v in self.witness_y]
        if self.notes:
            out["notes"] = list(self.notes)
        return out


def _feasibility_guard(P: Problem, z, concept: str, grid: int,
                       ugrid: int) -> Optional[EfficiencyReport]:
    z = np.asarray(z, dtype=float)
    vals = np.array(
        [
            float(worst_case_values_batch(g, z[None, :], P.uncertainty, ugrid)[0])
            for g in P.constraints
        ]
    )
    if np.max(vals, initial=-np.inf) > FEAS_TOL:
        return EfficiencyReport(
            concept, False, grid, 0,
            notes=("point is not robust feasible",),
        )
    return None


def _dominators_orthant(D: np.ndarray, strict: bool) -> np.ndarray:
    if strict:
        return np.all(D < -DOMINANCE_TOL, axis=1)
    return np.all(D <= DOMINANCE_TOL, axis=1) & np.any(
        D < -DOMINANCE_TOL, axis=1
    )


def _dominators_general(P: Problem, D: np.ndarray, strict: bool) -> np.ndarray:
    if strict:
        # cone interior: positive margin against every dual extreme ray
        rays = P.cone.dual_rays()
        margins = (-D) @ rays.T
        return np.all(margins > DOMINANCE_TOL, axis=1)
    out = np.zeros(len(D), dtype=bool)
    for r, d in enumerate(D):
        if np.max(np.abs(d)) <= DOMINANCE_TOL:
            continue
        out[r] = P.cone.contains(-d, DOMINANCE_TOL)
    return out


def _dominator_mask(P: Problem, D: np.ndarray, strict: bool) -> np.ndarray:
    if P.cone.kind == "orthant":
        return _dominators_orthant(D, strict)
    return _dominators_general(P, D, strict)


def _dominance_report(P: Problem, z, concept: str, strict: bool, grid: int,
                      ugrid: int, context: Optional[EfficiencyContext]
                      ) -> EfficiencyReport:
    guard = _feasibility_guard(P, z, concept, grid, ugrid)
    if guard is not None:
        return guard
    ctx = context if context is not None else grid_context(P, grid, ugrid)
    z = np.asarray(z, dtype=float)
    D = ctx.F - P.objective_values(z)[None, :]
    mask = _dominator_mask(P, D, strict)
    hits = np.flatnonzero(mask)
    if len(hits) == 0:
        return EfficiencyReport(concept, True, ctx.grid, len(ctx.Z))
    first = int(hits[0])
    return EfficiencyReport(
        concept, False, ctx.grid, len(ctx.Z),
        counterexample=ctx.Z[first],
        counterexample_values=ctx.F[first],
    )


def certify_weak(P: Problem, z, grid: int = EFFICIENCY_GRID,
                 ugrid: int = GRID_DEFAULT,
                 context: Optional[EfficiencyContext] = None
                 ) -> EfficiencyReport:
    """No feasible grid point improves every objective strictly."""
    return _dominance_report(P, z, "weak", True, grid, ugrid, context)


def certify_efficient(P: Problem, z, grid: int = EFFICIENCY_GRID,
                      ugrid: int = GRID_DEFAULT,
                      context: Optional[EfficiencyContext] = None
                      ) -> EfficiencyReport:
    """No feasible grid point dominates in the cone ordering."""
    return _dominance_report(P, z, "efficient", False, grid, ugrid, context)


def certify_proper(P: Problem, z, grid: int = EFFICIENCY_GRID,
                   eps: float = PROPER_EPS, ugrid: int = GRID_DEFAULT,
                   context: Optional[EfficiencyContext] = None
                   ) -> EfficiencyReport:
    """A uniformly interior dual weight makes the point a grid minimizer.

    Searches by linear programming for weights with margin ``eps`` against
    every cone generator such that the weighted objective change is
    nonnegative at every feasible grid point.
    """
    guard = _feasibility_guard(P, z, "proper", grid, ugrid)
    if guard is not None:
        return guard
    ctx = context if context is not None else grid_context(P, grid, ugrid)
    z = np.asarray(z, dtype=float)
    D = ctx.F - P.objective_values(z)[None, :]
    R = P.cone.generating_rays()
    m = P.n_objectives
    A_ub = np.vstack([-D, -R])
    b_ub = np.concatenate([np.zeros(len(D)), -eps * np.ones(len(R))])
    A_eq = R.sum(axis=0)[None, :]
    b_eq = np.array([1.0])
    res = linprog(
        np.zeros(m), A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
        bounds=[(None, None)] * m, method="highs",
    )
    if res.status != 0:
        return EfficiencyReport(
            "proper", False, ctx.grid, len(ctx.Z),
            notes=("no interior weight vector supports the point "
                   f"at margin {eps}",),
        )
    return EfficiencyReport(
        "proper", True, ctx.grid, len(ctx.Z), witness_y=res.x,
    )


# ---------------------------------------------------------------------------
# sufficiency rules
# ---------------------------------------------------------------------------


@dataclass
class SufficiencyReport:
    weak: bool
    efficient: bool
    proper: bool
    reasons: List[str] = field(default_factory=list)

    def to_jsonable(self) -> dict:
        return {
            "weak": self.weak,
            "efficient": self.efficient,
            "proper": self.proper,
            "reasons": list(self.reasons),
        }


def sufficient_conditions(P: Problem, cert: KktCertificate,
                          verification: VerificationReport,
                          classification: TypeClassification
                          ) -> SufficiencyReport:
    """Which efficiency concepts follow from certificate plus convexity.

    Rules: a verified certificate with nonzero weights yields weak efficiency
    when the first premise bundle (pseudo-convex objectives, quasi-convex
    binding constraints) is intact, efficiency when the strict bundle is
    intact, and proper efficiency when additionally the weights sit strictly
    inside the dual cone.
    """
    reasons: List[str] = []
    base = verification.ok and not cert.fritz_john
    if not verification.ok:
        reasons.append("certificate failed verification; no rule applies")
    elif cert.fritz_john:
        reasons.append("zero objective weights (degenerate certificate); "
                       "no rule applies")

    weak = base and not classification.type_i.refuted
    if weak:
        reasons.append(
            "verified certificate + first premise bundle intact "
            "=> weakly efficient"
        )
    elif base:
        reasons.append("first premise bundle refuted; weak rule blocked")

    efficient = base and not classification.type_ii.refuted
    if efficient:
        reasons.append(
            "verified certificate + strict premise bundle intact => efficient"
        )
    elif base:
        reasons.append("strict premise bundle refuted; efficiency rule blocked")

    margin = P.cone.dual_margin(np.asarray(cert.y_star, dtype=float))
    proper = weak and margin > 0
    if proper:
        reasons.append(
            f"weights have interior dual margin {margin:.3g} "
            "=> properly efficient"
        )
    elif weak:
        reasons.append("weights sit on the dual cone boundary; "
                       "proper rule blocked")
    return SufficiencyReport(weak, efficient, proper, reasons)
