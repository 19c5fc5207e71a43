"""Worst-case (semi-infinite) constraint machinery.

A robust constraint is ``max over u in U of g_i(z, u) <= 0``.  This module
evaluates those worst-case values (dense grid plus bounded per-axis polish for
box uncertainty, exact enumeration for finite uncertainty), locates the
uncertainty realizations that attain them, and assembles the decision-space
limiting subdifferentials of the attaining pieces.  It also defines ordering
cones and the problem container loaded from JSON.
"""

from __future__ import annotations

import itertools
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linprog, minimize_scalar

from .expr import Expr, Point, eval_broadcast, evaluate, parse_expr
from .polytope import Polytope, PolytopeUnion, convex_hull_of, dedup_pieces
from .subdiff import limiting_subdiff

# default per-axis grid resolution for worst-case evaluation
GRID_DEFAULT = 1001
# an uncertainty realization counts as attaining when within this of the max
ACTIVE_TOL = 1e-6
# per-axis polish stops when the bracketing interval is this small
REFINE_XATOL = 1e-10
# attaining clusters wider than this are treated as plateaus (outer estimate)
EXTENT_TOL = 1e-6
# rows of decision points evaluated per chunk in batch mode
CHUNK_ROWS = 2000
# default slack for robust feasibility
FEAS_TOL = 1e-9


class ProblemFormatError(Exception):
    """Malformed problem description."""


# ---------------------------------------------------------------------------
# uncertainty sets
# ---------------------------------------------------------------------------


@dataclass
class UncertaintySet:
    """Box (bounds) or finite (explicit points) uncertainty set."""

    kind: str
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    points: Optional[np.ndarray] = None

    @staticmethod
    def box(lower, upper) -> "UncertaintySet":
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        if lower.shape != upper.shape:
            raise ProblemFormatError("uncertainty bounds must have equal length")
        if np.any(lower > upper):
            raise ProblemFormatError("uncertainty lower bound exceeds upper bound")
        return UncertaintySet("box", lower=lower, upper=upper)

    @staticmethod
    def finite(points) -> "UncertaintySet":
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if len(pts) == 0:
            raise ProblemFormatError("a finite uncertainty set needs points")
        return UncertaintySet("finite", points=pts)

    @property
    def dim(self) -> int:
        if self.kind == "box":
            return len(self.lower)
        return self.points.shape[1]

    def grid_points(self, n: int = GRID_DEFAULT) -> np.ndarray:
        """(M, p) array of evaluation points."""
        if self.kind == "finite":
            return self.points
        axes = [
            np.linspace(lo, hi, 1 if hi == lo else n)
            for lo, hi in zip(self.lower, self.upper)
        ]
        mesh = np.meshgrid(*axes, indexing="ij") if axes else []
        if not axes:
            return np.zeros((1, 0))
        return np.stack([m.ravel() for m in mesh], axis=1)

    def contains(self, u, tol: float = 1e-9) -> bool:
        u = np.atleast_1d(np.asarray(u, dtype=float))
        if self.kind == "box":
            return bool(
                np.all(u >= self.lower - tol) and np.all(u <= self.upper + tol)
            )
        return bool(np.min(np.max(np.abs(self.points - u), axis=1)) <= tol)

    def clip(self, u) -> np.ndarray:
        u = np.atleast_1d(np.asarray(u, dtype=float))
        if self.kind == "box":
            return np.clip(u, self.lower, self.upper)
        idx = int(np.argmin(np.max(np.abs(self.points - u), axis=1)))
        return self.points[idx]

    def to_jsonable(self) -> dict:
        if self.kind == "box":
            return {
                "type": "box",
                "lower": [float(v) for v in self.lower],
                "upper": [float(v) for v in self.upper],
            }
        return {"type": "finite", "points": [[float(v) for v in p] for p in self.points]}


# ---------------------------------------------------------------------------
# ordering cones
# ---------------------------------------------------------------------------


@dataclass
class ConeSpec:
    """Ordering cone: nonnegative orthant or finitely generated (pointed).

    Generator cones are validated at load: zero rays are dropped and a small
    feasibility LP rejects cones containing a line (non-pointed), for which
    the efficiency notions below would degenerate.
    """

    kind: str
    dim: int
    rays: Optional[np.ndarray] = None  # (k, m) for generator cones

    @staticmethod
    def orthant(dim: int) -> "ConeSpec":
        return ConeSpec("orthant", dim)

    @staticmethod
    def from_rays(rays) -> "ConeSpec":
        R = np.asarray(rays, dtype=float)
        if R.ndim != 2 or R.shape[0] == 0:
            raise ProblemFormatError("generator cone needs a nonempty ray matrix")
        keep = np.linalg.norm(R, axis=1) > 1e-12
        R = R[keep]
        if len(R) == 0:
            raise ProblemFormatError("generator cone has only zero rays")
        # pointedness: K contains a line iff 0 is a nontrivial nonnegative
        # combination of the rays
        k = len(R)
        res = linprog(
            np.zeros(k),
            A_eq=np.vstack([R.T, np.ones((1, k))]),
            b_eq=np.concatenate([np.zeros(R.shape[1]), [1.0]]),
            bounds=[(0, None)] * k,
            method="highs",
        )
        if res.status == 0:
            raise ProblemFormatError("generator cone is not pointed")
        return ConeSpec("generators", R.shape[1], rays=R)

    def generating_rays(self) -> np.ndarray:
        if self.kind == "orthant":
            return np.eye(self.dim)
        return self.rays

    def contains(self, x, tol: float = 1e-9) -> bool:
        """x in K (membership in the cone itself)."""
        x = np.asarray(x, dtype=float)
        if self.kind == "orthant":
            return bool(np.all(x >= -tol))
        # minimize the infinity-norm residual |R^T lam - x| over lam >= 0
        R = self.rays
        k = len(R)
        c = np.zeros(k + 1)
        c[-1] = 1.0
        A_ub = np.vstack(
            [
                np.hstack([R.T, -np.ones((self.dim, 1))]),
                np.hstack([-R.T, -np.ones((self.dim, 1))]),
            ]
        )
        b_ub = np.concatenate([x, -x])
        res = linprog(
            c,
            A_ub=A_ub,
            b_ub=b_ub,
            bounds=[(0, None)] * k + [(0, None)],
            method="highs",
        )
        return bool(res.status == 0 and res.fun <= tol)

    def dual_margin(self, y) -> float:
        """min over generating rays r of <y, r/|r|>; >0 means y in int K+."""
        y = np.asarray(y, dtype=float)
        R = self.generating_rays()
        norms = np.linalg.norm(R, axis=1)
        return float(np.min((R @ y) / norms))

    def dual_contains(self, y, tol: float = 1e-9) -> bool:
        return self.dual_margin(y) >= -tol

    def dual_rays(self) -> np.ndarray:
        """Generating rays of the dual cone K+ (dimension <= 3 for generators)."""
        if self.kind == "orthant":
            return np.eye(self.dim)
        m = self.dim
        R = self.rays
        if m == 1:
            return np.eye(1) if np.all(R > 0) else -np.eye(1)
        if m == 2:
            # dual rays of a pointed planar cone are normals of extreme rays
            candidates = []
            for i in range(len(R)):
                n1 = np.array([-R[i, 1], R[i, 0]])
                for n in (n1, -n1):
                    if np.all(R @ n >= -1e-9):
                        candidates.append(n / np.linalg.norm(n))
            return _dedup_unit(candidates)
        if m == 3:
            candidates = []
            for i, j in itertools.combinations(range(len(R)), 2):
                n = np.cross(R[i], R[j])
                norm = np.linalg.norm(n)
                if norm <= 1e-12:
                    continue
                for s in (n / norm, -n / norm):
                    if np.all(R @ s >= -1e-9):
                        candidates.append(s)
            return _dedup_unit(candidates)
        raise NotImplementedError(
            "dual rays for generator cones are provided up to dimension 3"
        )

    def to_jsonable(self) -> dict:
        if self.kind == "orthant":
            return {"type": "orthant"}
        return {"type": "generators", "rays": [[float(v) for v in r] for r in self.rays]}


def _dedup_unit(vectors: Sequence[np.ndarray]) -> np.ndarray:
    out: List[np.ndarray] = []
    for v in vectors:
        if not any(np.max(np.abs(v - q)) <= 1e-9 for q in out):
            out.append(v)
    if not out:
        raise ProblemFormatError("dual cone has empty interior direction set")
    return np.array(sorted(out, key=tuple))


# ---------------------------------------------------------------------------
# problem container
# ---------------------------------------------------------------------------


@dataclass
class Problem:
    decision_dim: int
    uncertainty_dim: int
    objectives: Tuple[Expr, ...]
    constraints: Tuple[Expr, ...]
    uncertainty: UncertaintySet
    cone: ConeSpec
    box_lower: np.ndarray
    box_upper: np.ndarray
    label: str = ""
    objective_sources: Tuple[str, ...] = ()
    constraint_sources: Tuple[str, ...] = ()

    @property
    def n_objectives(self) -> int:
        return len(self.objectives)

    @property
    def n_constraints(self) -> int:
        return len(self.constraints)

    def in_box(self, z, tol: float = 1e-9) -> bool:
        z = np.asarray(z, dtype=float)
        return bool(
            np.all(z >= self.box_lower - tol) and np.all(z <= self.box_upper + tol)
        )

    def box_grid(self, n: int = 101) -> np.ndarray:
        """(n^d, d) row-major grid over the decision box."""
        axes = [
            np.linspace(lo, hi, 1 if lo == hi else n)
            for lo, hi in zip(self.box_lower, self.box_upper)
        ]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def objective_values(self, z) -> np.ndarray:
        pt = Point.of(z)
        return np.array([evaluate(f, pt) for f in self.objectives])

    def objective_values_batch(self, Z: np.ndarray) -> np.ndarray:
        """(N, m) objective values for rows of Z."""
        cols = [Z[:, j] for j in range(self.decision_dim)]
        return np.stack(
            [np.broadcast_to(eval_broadcast(f, cols), (len(Z),)).astype(float)
             for f in self.objectives],
            axis=1,
        )


# ---------------------------------------------------------------------------
# worst-case evaluation
# ---------------------------------------------------------------------------


def _refine_box_max(e: Expr, z, u0: np.ndarray, U: UncertaintySet,
                    passes: int = 2) -> Tuple[np.ndarray, float]:
    """Per-axis bounded polish of a grid maximizer (box sets only)."""
    u = np.asarray(u0, dtype=float).copy()
    z = np.asarray(z, dtype=float)
    best = evaluate(e, Point.of(z, u))
    for _ in range(passes):
        for j in range(len(u)):
            lo, hi = U.lower[j], U.upper[j]
            if hi <= lo:
                continue

            def neg(t, j=j):
                trial = u.copy()
                trial[j] = t
                return -evaluate(e, Point.of(z, trial))

            res = minimize_scalar(
                neg, bounds=(lo, hi), method="bounded",
                options={"xatol": REFINE_XATOL},
            )
            if -res.fun > best:
                best = float(-res.fun)
                u[j] = float(res.x)
    return u, best


def worst_case_value(e: Expr, z, U: UncertaintySet,
                     grid: int = GRID_DEFAULT) -> float:
    """max over u in U of e(z, u), dense grid plus per-axis polish."""
    z = np.asarray(z, dtype=float)
    if U.dim == 0:
        return evaluate(e, Point.of(z, np.zeros(0)))
    pts = U.grid_points(grid)
    cols_z = [np.asarray(z[j]) for j in range(len(z))]
    cols_u = [pts[:, k] for k in range(U.dim)]
    vals = np.broadcast_to(eval_broadcast(e, cols_z, cols_u), (len(pts),))
    best_idx = int(np.argmax(vals))
    best = float(vals[best_idx])
    if U.kind == "box":
        _, refined = _refine_box_max(e, z, pts[best_idx], U)
        best = max(best, refined)
    return best


# keep the conventional short name used throughout the robust-optimization API
psi = worst_case_value


def _batch_threads() -> int:
    try:
        return max(1, int(os.environ.get("ROBUSTCERT_THREADS", "1")))
    except ValueError:
        return 1


def worst_case_values_batch(e: Expr, Z: np.ndarray, U: UncertaintySet,
                            grid: int = GRID_DEFAULT,
                            chunk: int = CHUNK_ROWS) -> np.ndarray:
    """Grid-resolution worst-case values for many decision points at once.

    Chunks of decision rows are independent; with ROBUSTCERT_THREADS > 1 they
    run on a thread pool.  Each chunk writes its own output slice, so results
    are identical for any thread count.
    """
    Z = np.asarray(Z, dtype=float)
    if U.dim == 0:
        cols = [Z[:, j] for j in range(Z.shape[1])]
        return np.broadcast_to(eval_broadcast(e, cols), (len(Z),)).astype(float)
    pts = U.grid_points(grid)
    out = np.empty(len(Z))

    def run_chunk(start: int) -> None:
        stop = min(start + chunk, len(Z))
        cols_z = [Z[start:stop, j][:, None] for j in range(Z.shape[1])]
        cols_u = [pts[:, k][None, :] for k in range(U.dim)]
        vals = eval_broadcast(e, cols_z, cols_u)
        vals = np.broadcast_to(vals, (stop - start, len(pts)))
        out[start:stop] = vals.max(axis=1)

    starts = range(0, len(Z), chunk)
    workers = min(_batch_threads(), max(1, len(starts)))
    if workers == 1:
        for start in starts:
            run_chunk(start)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run_chunk, starts))
    return out


@dataclass
class AttainingRealization:
    """An uncertainty realization attaining the worst case at a point.

    ``extent`` is the radius of the attaining cluster around ``point`` (zero
    for an isolated maximizer); ``lower``/``upper`` bound the cluster.
    """

    point: np.ndarray
    value: float
    extent: float
    lower: np.ndarray
    upper: np.ndarray


def active_uncertainty(e: Expr, z, U: UncertaintySet, tol: float = ACTIVE_TOL,
                       grid: int = GRID_DEFAULT) -> List[AttainingRealization]:
    """Clustered uncertainty realizations attaining the worst case at z."""
    z = np.asarray(z, dtype=float)
    if U.dim == 0:
        v = evaluate(e, Point.of(z, np.zeros(0)))
        zero = np.zeros(0)
        return [AttainingRealization(zero, v, 0.0, zero, zero)]
    pts = U.grid_points(grid)
    cols_z = [np.asarray(z[j]) for j in range(len(z))]
    cols_u = [pts[:, k] for k in range(U.dim)]
    vals = np.broadcast_to(eval_broadcast(e, cols_z, cols_u), (len(pts),))
    vmax = float(np.max(vals))
    cand = np.flatnonzero(vals >= vmax - tol)

    if U.kind == "finite":
        reps = [
            AttainingRealization(pts[i], float(vals[i]), 0.0, pts[i], pts[i])
            for i in cand
        ]
        reps.sort(key=lambda r: tuple(r.point))
        return reps

    # cluster grid candidates by adjacency (within 1.5 grid steps)
    steps = np.array(
        [
            (hi - lo) / (grid - 1) if hi > lo else 1.0
            for lo, hi in zip(U.lower, U.upper)
        ]
    )
    cand_pts = pts[cand]
    clusters: List[List[int]] = []
    assigned = np.full(len(cand), -1)
    for i in range(len(cand)):
        if assigned[i] >= 0:
            continue
        queue = [i]
        assigned[i] = len(clusters)
        members = [i]
        while queue:
            a = queue.pop()
            near = np.flatnonzero(
                (assigned < 0)
                & (np.max(np.abs(cand_pts - cand_pts[a]) / steps, axis=1) <= 1.5)
            )
            for b in near:
                assigned[b] = len(clusters)
                members.append(int(b))
                queue.append(int(b))
        clusters.append(members)

    reps: List[AttainingRealization] = []
    for members in clusters:
        cluster_pts = cand_pts[members]
        cluster_vals = vals[cand[members]]
        best_local = int(np.argmax(cluster_vals))
        u_ref, v_ref = _refine_box_max(e, z, cluster_pts[best_local], U)
        lower = np.minimum(cluster_pts.min(axis=0), u_ref)
        upper = np.maximum(cluster_pts.max(axis=0), u_ref)
        extent = float(np.max(np.linalg.norm(cluster_pts - u_ref, axis=1), initial=0.0))
        reps.append(AttainingRealization(u_ref, v_ref, extent, lower, upper))

    # merge refined representatives that coincide
    merged: List[AttainingRealization] = []
    for rep in sorted(reps, key=lambda r: tuple(r.point)):
        absorbed = False
        for prior in merged:
            if np.max(np.abs(prior.point - rep.point), initial=0.0) <= 1e-6:
                prior.value = max(prior.value, rep.value)
                prior.extent = max(prior.extent, rep.extent)
                prior.lower = np.minimum(prior.lower, rep.lower)
                prior.upper = np.maximum(prior.upper, rep.upper)
                absorbed = True
                break
        if not absorbed:
            merged.append(rep)
    return merged


def worst_case_subdiff(e: Expr, z, U: UncertaintySet, tol: float = ACTIVE_TOL,
                       grid: int = GRID_DEFAULT) -> PolytopeUnion:
    """Union of decision-space subdifferentials over attaining realizations.

    Isolated maximizers give an exact union; plateau clusters (extent above
    ``EXTENT_TOL``) are hulled from sampled endpoint subdifferentials and
    flagged as an outer estimate.
    """
    z = np.asarray(z, dtype=float)
    reps = active_uncertainty(e, z, U, tol=tol, grid=grid)
    pieces: List[Polytope] = []
    outer = False
    notes: Tuple[str, ...] = ()
    for rep in reps:
        s = limiting_subdiff(e, Point.of(z, rep.point), wrt="decision")
        local = list(s.pieces)
        if rep.extent > EXTENT_TOL:
            corners = _box_corners(rep.lower, rep.upper)
            for corner in corners:
                if np.max(np.abs(corner - rep.point), initial=0.0) <= 1e-12:
                    continue
                s_corner = limiting_subdiff(
                    e, Point.of(z, corner), wrt="decision"
                )
                local.extend(s_corner.pieces)
            local = [convex_hull_of(local)]
            outer = True
            notes = notes + (
                "attaining plateau hulled from endpoint subdifferentials",
            )
        if s.outer_estimate:
            outer = True
            notes = notes + s.notes
        pieces.extend(local)
    return PolytopeUnion(dedup_pieces(pieces), outer_estimate=outer, notes=notes)


def _box_corners(lower: np.ndarray, upper: np.ndarray) -> List[np.ndarray]:
    ranges = [
        (lo, hi) if hi > lo else (lo,) for lo, hi in zip(lower, upper)
    ]
    return [np.array(c, dtype=float) for c in itertools.product(*ranges)]


# ---------------------------------------------------------------------------
# feasibility and activity
# ---------------------------------------------------------------------------


def constraint_values(P: Problem, z, grid: int = GRID_DEFAULT) -> np.ndarray:
    """Worst-case value of every constraint at z."""
    return np.array(
        [worst_case_value(g, z, P.uncertainty, grid) for g in P.constraints]
    )


def is_robust_feasible(P: Problem, z, tol: float = FEAS_TOL,
                       grid: int = GRID_DEFAULT) -> bool:
    return bool(np.all(constraint_values(P, z, grid) <= tol))


def active_index_set(P: Problem, z, tol: float = ACTIVE_TOL,
                     grid: int = GRID_DEFAULT) -> List[int]:
    """Constraints whose worst-case value is within tol of the largest one."""
    vals = constraint_values(P, z, grid)
    top = float(np.max(vals))
    return [i for i, v in enumerate(vals) if v >= top - tol]


def zero_active_set(P: Problem, z, tol: float = ACTIVE_TOL,
                    grid: int = GRID_DEFAULT) -> List[int]:
    """Constraints whose worst-case value is within tol of zero (binding)."""
    vals = constraint_values(P, z, grid)
    return [i for i, v in enumerate(vals) if v >= -tol]
