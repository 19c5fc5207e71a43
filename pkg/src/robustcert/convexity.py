"""Sampling-based classification of generalized convexity at a point.

The sufficiency rules for robust efficiency consume three premises about the
problem's behavior around a candidate point:

* pseudo-convexity of every dual-weighted objective combination: a weighted
  value drop from the point forces every subgradient of the combination to
  point strictly away from the sample;
* the strict variant, where even a weighted tie (at a distinct sample) forces
  strictly negative subgradient alignment;
* quasi-convexity of each binding worst-case constraint: a sample that does
  not increase the worst case never sees positively aligned subgradients.

These are universally quantified statements, so sampling can only *refute*
them.  The checkers scan feasible decision samples against a full grid of
dual-cone weight mixtures using support functions of the same
per-objective subdifferential sets the certificate machinery builds; a found
violation is revalidated point by point before being reported.  A verdict of
``not-refuted`` is evidence at the stated budget, not a proof.

Sample stream: every fourth candidate walks a deterministic dyadic lattice
over the decision box (integer coordinates first, then halves, quarters, ...),
the rest are uniform draws from a fixed-seed PCG64 generator.  The lattice
guarantees that structured rational points — where piecewise-linear ties
typically live — are reached deterministically.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .constraints import (
    ACTIVE_TOL,
    GRID_DEFAULT,
    Problem,
    worst_case_subdiff,
    worst_case_value,
    worst_case_values_batch,
    zero_active_set,
)
from .expr import Point
from .polytope import PolytopeUnion
from .subdiff import limiting_subdiff
from .kkt import _simplex_indices

# premise tolerances: strict decrease must clear this, ties may sit within it
PREMISE_TOL = 1e-12
# support margin that counts as a violation for pseudo / strict pseudo
SUPPORT_TOL = 1e-12
# support margin that counts as a violation for quasi (looser: grid noise)
QUASI_SUPPORT_TOL = 1e-9
# samples closer than this to the reference point are skipped for strictness
SAME_POINT_TOL = 1e-12

DEFAULT_SAMPLES = 2000
DEFAULT_Y_EDGE = 24
CHUNK = 1000

PSEUDO = "pseudo"
STRICT = "strict"
QUASI = "quasi"


@dataclass
class ConvexityWitness:
    z: np.ndarray
    y: Optional[np.ndarray]  # weight mixture, None for per-constraint checks
    part: str                # 'objectives' or 'constraint <i>'
    delta: float             # weighted value change (premise side)
    support: float           # subgradient support value (conclusion side)
    sample_index: int


@dataclass
class Verdict:
    status: str              # 'refuted' | 'not-refuted'
    witness: Optional[ConvexityWitness]
    samples_used: int
    resolution: int          # weight-grid edge count

    @property
    def refuted(self) -> bool:
        return self.status == "refuted"

    def to_jsonable(self) -> dict:
        out = {
            "status": self.status,
            "samples_used": self.samples_used,
            "resolution": self.resolution,
        }
        if self.witness is not None:
            out["witness"] = {
                "z": [float(v) for v in self.witness.z],
                "y": None if self.witness.y is None
                else [float(v) for v in self.witness.y],
                "part": self.witness.part,
                "delta": float(self.witness.delta),
                "support": float(self.witness.support),
                "sample_index": self.witness.sample_index,
            }
        return out


@dataclass
class TypeClassification:
    type_i: Verdict
    type_ii: Verdict

    def to_jsonable(self) -> dict:
        return {
            "type_i": self.type_i.to_jsonable(),
            "type_ii": self.type_ii.to_jsonable(),
        }


# ---------------------------------------------------------------------------
# sample stream
# ---------------------------------------------------------------------------


def dyadic_lattice(lower, upper) -> Iterator[np.ndarray]:
    """Deterministic sweep: integer points, then odd multiples of 1/2, 1/4, ...

    Row-major within each refinement level (first coordinate slowest).  Axes
    with zero width stay pinned and do not participate in the novelty test.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    free = [j for j in range(len(lower)) if upper[j] > lower[j]]
    if not free:
        yield lower.copy()
        return
    for level in itertools.count():
        step = 1.0 if level == 0 else 2.0 ** (-level)
        axis_ks = []
        for j in range(len(lower)):
            if j not in free:
                axis_ks.append([None])
                continue
            k_lo = math.ceil(lower[j] / step - 1e-12)
            k_hi = math.floor(upper[j] / step + 1e-12)
            axis_ks.append(list(range(k_lo, k_hi + 1)))
        if any(len(ks) == 0 for ks in axis_ks):
            continue
        for combo in itertools.product(*axis_ks):
            if level > 0 and not any(
                k is not None and k % 2 != 0 for k in combo
            ):
                continue  # already produced at a coarser level
            pt = np.array(
                [
                    lower[j] if k is None else k * step
                    for j, k in enumerate(combo)
                ]
            )
            yield pt
        if level > 30:
            return


def _candidate_stream(P: Problem, seed: int) -> Iterator[np.ndarray]:
    lattice = dyadic_lattice(P.box_lower, P.box_upper)
    rng = np.random.default_rng(seed)
    width = P.box_upper - P.box_lower
    for index in itertools.count():
        if index % 4 == 0:
            pt = next(lattice, None)
            if pt is not None:
                yield pt
                continue
        yield P.box_lower + width * rng.uniform(size=P.decision_dim)


# ---------------------------------------------------------------------------
# weight grid
# ---------------------------------------------------------------------------


def dual_weight_grid(P: Problem, edge: int = DEFAULT_Y_EDGE) -> np.ndarray:
    """Simplex mixtures of the dual cone's extreme rays, in scan order."""
    rays = P.cone.dual_rays()
    lam = _simplex_indices(len(rays), edge).astype(float) / edge
    Y = lam @ rays
    keep: List[np.ndarray] = []
    for row in Y:
        if not any(np.max(np.abs(row - q)) <= 1e-12 for q in keep):
            keep.append(row)
    return np.array(keep)


# ---------------------------------------------------------------------------
# scan core
# ---------------------------------------------------------------------------


@dataclass
class _ScanData:
    f_ref: np.ndarray
    obj_vertex_stacks: List[np.ndarray]
    psi_ref: np.ndarray            # refined worst cases at the point
    binding: List[int]
    con_vertex_stacks: Dict[int, np.ndarray]


def _collect(P: Problem, z, grid: int) -> _ScanData:
    z = np.asarray(z, dtype=float)
    pt = Point.of(z)
    stacks = []
    for f in P.objectives:
        union = limiting_subdiff(f, pt, wrt="decision")
        stacks.append(np.vstack([p.vertices for p in union.pieces]))
    psi_ref = np.array(
        [worst_case_value(g, z, P.uncertainty, grid) for g in P.constraints]
    )
    binding = [i for i, v in enumerate(psi_ref) if v >= -ACTIVE_TOL]
    con_stacks: Dict[int, np.ndarray] = {}
    for i in binding:
        hull = worst_case_subdiff(
            P.constraints[i], z, P.uncertainty, ACTIVE_TOL, grid
        ).hull()
        con_stacks[i] = hull.vertices
    return _ScanData(P.objective_values(z), stacks, psi_ref, binding, con_stacks)


def _support_matrix(W: np.ndarray, stacks: Sequence[np.ndarray]
                    ) -> Tuple[np.ndarray, np.ndarray]:
    """Per-sample max and min of <v, w> over each stacked vertex set."""
    smax = np.empty((len(W), len(stacks)))
    smin = np.empty((len(W), len(stacks)))
    for j, V in enumerate(stacks):
        M = W @ V.T
        smax[:, j] = M.max(axis=1)
        smin[:, j] = M.min(axis=1)
    return smax, smin


def _scan(P: Problem, z, kinds: Sequence[str], samples: int, seed: int,
          y_edge: int, grid: int, chunk: int = CHUNK
          ) -> Tuple[Dict[str, Optional[ConvexityWitness]], Dict[str, int]]:
    z = np.asarray(z, dtype=float)
    data = _collect(P, z, grid)
    Y = dual_weight_grid(P, y_edge)
    Yp = np.maximum(Y, 0.0)
    Ym = np.minimum(Y, 0.0)

    found: Dict[str, Optional[ConvexityWitness]] = {k: None for k in kinds}
    used: Dict[str, int] = {k: samples for k in kinds}
    stream = _candidate_stream(P, seed)
    drawn = 0
    while drawn < samples and any(found[k] is None for k in kinds):
        batch = []
        idx = []
        while len(batch) < chunk and drawn < samples:
            batch.append(next(stream))
            idx.append(drawn)
            drawn += 1
        Z = np.array(batch)
        feas = np.ones(len(Z), dtype=bool)
        for g in P.constraints:
            feas &= worst_case_values_batch(g, Z, P.uncertainty, grid) <= 1e-9
        if not np.any(feas):
            continue
        Zf = Z[feas]
        idxf = np.asarray(idx)[feas]
        W = Zf - z[None, :]
        F = P.objective_values_batch(Zf)
        Delta = (F - data.f_ref[None, :]) @ Y.T          # (c, n_y)
        smax, smin = _support_matrix(W, data.obj_vertex_stacks)
        S = smax @ Yp.T + smin @ Ym.T                    # (c, n_y)
        not_same = np.max(np.abs(W), axis=1) > SAME_POINT_TOL

        def first_hit(mask: np.ndarray) -> Optional[Tuple[int, int]]:
            flat = np.flatnonzero(mask.ravel())
            if len(flat) == 0:
                return None
            r, c = divmod(int(flat[0]), mask.shape[1])
            return r, c

        if PSEUDO in kinds and found[PSEUDO] is None:
            hit = first_hit((Delta < -PREMISE_TOL) & (S >= -SUPPORT_TOL))
            if hit is not None:
                r, c = hit
                found[PSEUDO] = ConvexityWitness(
                    Zf[r], Y[c], "objectives",
                    float(Delta[r, c]), float(S[r, c]), int(idxf[r]),
                )
                used[PSEUDO] = int(idxf[r]) + 1
        if STRICT in kinds and found[STRICT] is None:
            hit = first_hit(
                (Delta <= PREMISE_TOL) & (S >= -SUPPORT_TOL) & not_same[:, None]
            )
            if hit is not None:
                r, c = hit
                found[STRICT] = ConvexityWitness(
                    Zf[r], Y[c], "objectives",
                    float(Delta[r, c]), float(S[r, c]), int(idxf[r]),
                )
                used[STRICT] = int(idxf[r]) + 1
        if QUASI in kinds and found[QUASI] is None and data.binding:
            psi_mat = np.stack(
                [
                    worst_case_values_batch(
                        P.constraints[i], Zf, P.uncertainty, grid
                    )
                    for i in data.binding
                ],
                axis=1,
            )
            cmax, _ = _support_matrix(
                W, [data.con_vertex_stacks[i] for i in data.binding]
            )
            premise = psi_mat <= data.psi_ref[data.binding][None, :] + PREMISE_TOL
            hit = first_hit(premise & (cmax >= QUASI_SUPPORT_TOL))
            if hit is not None:
                r, c = hit
                i = data.binding[c]
                found[QUASI] = ConvexityWitness(
                    Zf[r], None, f"constraint {i + 1}",
                    float(psi_mat[r, c] - data.psi_ref[i]),
                    float(cmax[r, c]), int(idxf[r]),
                )
                used[QUASI] = int(idxf[r]) + 1

    for kind, wit in found.items():
        if wit is not None:
            _revalidate(P, z, data, kind, wit, grid)
    return found, used


def _revalidate(P: Problem, z, data: _ScanData, kind: str,
                wit: ConvexityWitness, grid: int) -> None:
    """Recompute the witness inequalities point by point; raise on mismatch."""
    w = wit.z - z
    if kind in (PSEUDO, STRICT):
        f_val = P.objective_values(wit.z)
        delta = float((f_val - data.f_ref) @ wit.y)
        support = 0.0
        for j, V in enumerate(data.obj_vertex_stacks):
            yj = wit.y[j]
            s = float(np.max(V @ w)) if yj >= 0 else float(np.min(V @ w))
            support += yj * s
        premise = (
            delta < -PREMISE_TOL if kind == PSEUDO
            else delta <= PREMISE_TOL and np.max(np.abs(w)) > SAME_POINT_TOL
        )
        ok = premise and support >= -SUPPORT_TOL
    else:
        i = int(wit.part.split()[-1]) - 1
        psi_val = float(
            worst_case_values_batch(
                P.constraints[i], wit.z[None, :], P.uncertainty, grid
            )[0]
        )
        premise = psi_val <= data.psi_ref[i] + PREMISE_TOL
        support = float(np.max(data.con_vertex_stacks[i] @ w))
        ok = premise and support >= QUASI_SUPPORT_TOL
    if not ok:
        raise RuntimeError(
            f"convexity witness failed revalidation ({kind} at {wit.z})"
        )


def revalidate_witness(P: Problem, z, witness: ConvexityWitness, kind: str,
                       grid: int = GRID_DEFAULT) -> None:
    """Recheck a supplied witness from freshly computed data.

    Accepts externally constructed witnesses (the ``delta``/``support``
    fields are recomputed, not trusted).  Raises RuntimeError when the
    witness does not refute ``kind`` at the reference point ``z``.
    """
    if kind not in (PSEUDO, STRICT, QUASI):
        raise ValueError(f"unknown convexity kind {kind!r}")
    z = np.asarray(z, dtype=float)
    _revalidate(P, z, _collect(P, z, grid), kind, witness, grid)


def _verdict(found: Optional[ConvexityWitness], used: int,
             y_edge: int) -> Verdict:
    if found is None:
        return Verdict("not-refuted", None, used, y_edge)
    return Verdict("refuted", found, used, y_edge)


# ---------------------------------------------------------------------------
# public checks
# ---------------------------------------------------------------------------


def check_pseudo_convex(P: Problem, z, samples: int = DEFAULT_SAMPLES,
                        seed: int = 0, y_edge: int = DEFAULT_Y_EDGE,
                        grid: int = GRID_DEFAULT) -> Verdict:
    """Search for a weighted value drop with non-negative subgradient support."""
    found, used = _scan(P, z, [PSEUDO], samples, seed, y_edge, grid)
    return _verdict(found[PSEUDO], used[PSEUDO], y_edge)


def check_strictly_pseudo_convex(P: Problem, z, samples: int = DEFAULT_SAMPLES,
                                 seed: int = 0, y_edge: int = DEFAULT_Y_EDGE,
                                 grid: int = GRID_DEFAULT) -> Verdict:
    """Like the pseudo check, but a weighted tie at a distinct point also counts."""
    found, used = _scan(P, z, [STRICT], samples, seed, y_edge, grid)
    return _verdict(found[STRICT], used[STRICT], y_edge)


def check_generalized_quasi_convex(P: Problem, z,
                                   samples: int = DEFAULT_SAMPLES,
                                   seed: int = 0,
                                   y_edge: int = DEFAULT_Y_EDGE,
                                   grid: int = GRID_DEFAULT) -> Verdict:
    """Search binding constraints for non-increasing samples with positive support."""
    found, used = _scan(P, z, [QUASI], samples, seed, y_edge, grid)
    return _verdict(found[QUASI], used[QUASI], y_edge)


def classify_type(P: Problem, z, samples: int = DEFAULT_SAMPLES,
                  seed: int = 0, y_edge: int = DEFAULT_Y_EDGE,
                  grid: int = GRID_DEFAULT) -> TypeClassification:
    """Joint classification consumed by the sufficiency rules.

    The first premise bundle pairs pseudo-convex weighted objectives with
    quasi-convex binding constraints; the second strengthens the objective
    side to the strict variant.  One shared sample stream feeds all three
    underlying scans.
    """
    found, used = _scan(P, z, [PSEUDO, STRICT, QUASI], samples, seed,
                        y_edge, grid)
    pseudo = _verdict(found[PSEUDO], used[PSEUDO], y_edge)
    strict = _verdict(found[STRICT], used[STRICT], y_edge)
    quasi = _verdict(found[QUASI], used[QUASI], y_edge)

    def combine(obj: Verdict, con: Verdict) -> Verdict:
        candidates = [v for v in (obj, con) if v.refuted]
        if not candidates:
            return Verdict(
                "not-refuted", None, max(obj.samples_used, con.samples_used),
                y_edge,
            )
        best = min(candidates, key=lambda v: v.witness.sample_index)
        return Verdict("refuted", best.witness, best.samples_used, y_edge)

    return TypeClassification(combine(pseudo, quasi), combine(strict, quasi))
