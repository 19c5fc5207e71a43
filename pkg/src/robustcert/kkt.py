"""Robust first-order (KKT-type) certificates.

A certificate at a feasible point consists of objective weights ``y_star`` in
the dual cone, constraint multipliers ``mu >= 0`` supported on binding
constraints, and attaining uncertainty witnesses, such that zero lies in

    sum_j y_j * (subdifferential of objective j)
  + sum_i mu_i * (hull of the attaining constraint subdifferentials),

with the Euclidean normalization |y|_2 + |mu|_2 = 1.  ``find_kkt_certificate``
scans a rational simplex grid of directions (interval prefilter, then small
feasibility LPs piece by piece); ``verify_certificate`` re-checks a given
certificate by an independent geometric route (min-norm-point distances).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linprog

from .constraints import (
    ACTIVE_TOL,
    GRID_DEFAULT,
    Problem,
    active_index_set,
    active_uncertainty,
    constraint_values,
    worst_case_subdiff,
    worst_case_values_batch,
)
from .expr import Point, evaluate
from .polytope import Polytope, PolytopeUnion, convex_hull_of
from .subdiff import UnsupportedComposition, limiting_subdiff, scalarized_subdiff

# default stationarity residual target for certificates
RESIDUAL_TOL = 1e-8
# prefilter slack: interval tests treat |value| <= this as touching zero
FILTER_TOL = 1e-9
# multipliers below this are treated as zero in reports
MU_ZERO_TOL = 1e-12
# coarse direction grid used when reporting the best residual on failure
COARSE_EDGE = 24


@dataclass
class KktOptions:
    """Search options: ``y_grid`` is points per simplex edge (>= 2)."""

    y_grid: int = 721
    tol: float = RESIDUAL_TOL
    mode: str = "outer"  # 'outer' per-objective fold | 'exact' scalarized
    active_tol: float = ACTIVE_TOL
    grid: int = GRID_DEFAULT
    max_lp: int = 50_000


@dataclass
class KktCertificate:
    y_star: np.ndarray
    mu: np.ndarray
    witnesses: List[List[np.ndarray]]
    residual: float
    mode: str
    fritz_john: bool = False
    fritz_john_also: bool = False

    def to_jsonable(self) -> dict:
        return {
            "y_star": [float(v) for v in self.y_star],
            "mu": [float(v) for v in self.mu],
            "witnesses": [
                [[float(c) for c in u] for u in per_constraint]
                for per_constraint in self.witnesses
            ],
            "residual": float(self.residual),
            "mode": self.mode,
            "fritz_john": bool(self.fritz_john),
            "fritz_john_also": bool(self.fritz_john_also),
        }

    @staticmethod
    def from_jsonable(data: dict) -> "KktCertificate":
        return KktCertificate(
            y_star=np.asarray(data["y_star"], dtype=float),
            mu=np.asarray(data["mu"], dtype=float),
            witnesses=[
                [np.asarray(u, dtype=float) for u in per_constraint]
                for per_constraint in data.get("witnesses", [])
            ],
            residual=float(data.get("residual", np.inf)),
            mode=data.get("mode", "outer"),
            fritz_john=bool(data.get("fritz_john", False)),
            fritz_john_also=bool(data.get("fritz_john_also", False)),
        )


class NotFoundAtResolution(Exception):
    """No certificate at the requested direction-grid resolution.

    ``best_residual``/``best_direction`` report the smallest stationarity
    residual observed on a coarse sweep, to guide refinement.
    """

    def __init__(self, message: str, best_residual: float,
                 best_direction: Optional[np.ndarray]):
        super().__init__(
            f"{message} (best residual observed: {best_residual:.3e})"
        )
        self.best_residual = best_residual
        self.best_direction = best_direction


# ---------------------------------------------------------------------------
# constraint qualification
# ---------------------------------------------------------------------------


@dataclass
class CqReport:
    satisfied: bool
    distance: float
    active_indices: List[int]
    trivial: bool  # no binding constraint, qualification holds vacuously

    def to_jsonable(self) -> dict:
        return {
            "satisfied": bool(self.satisfied),
            "distance": float(self.distance),
            "active_indices": [int(i) for i in self.active_indices],
            "trivial": bool(self.trivial),
        }


def check_cq(P: Problem, z, tol: float = ACTIVE_TOL,
             grid: int = GRID_DEFAULT) -> CqReport:
    """Qualification: zero avoids the hull of binding-constraint subdifferentials."""
    z = np.asarray(z, dtype=float)
    vals = constraint_values(P, z, grid)
    binding = [i for i, v in enumerate(vals) if v >= -tol]
    if not binding:
        return CqReport(True, np.inf, [], True)
    active = active_index_set(P, z, tol, grid)
    pieces: List[Polytope] = []
    for i in active:
        pieces.extend(
            worst_case_subdiff(P.constraints[i], z, P.uncertainty, tol, grid).pieces
        )
    hull = convex_hull_of(pieces)
    distance = hull.distance(np.zeros(P.decision_dim))
    return CqReport(distance > tol, float(distance), active, False)


# ---------------------------------------------------------------------------
# stationarity data shared by search and verification
# ---------------------------------------------------------------------------


@dataclass
class _StationarityData:
    point: Point
    obj_subdiffs: List[PolytopeUnion]
    psi_values: np.ndarray
    binding: List[int]
    hulls: Dict[int, Polytope]
    witnesses: Dict[int, List[np.ndarray]]


def _prepare(P: Problem, z, active_tol: float, grid: int) -> _StationarityData:
    z = np.asarray(z, dtype=float)
    obj_subdiffs = [
        limiting_subdiff(f, Point.of(z), wrt="decision") for f in P.objectives
    ]
    psi_values = constraint_values(P, z, grid)
    binding = [i for i, v in enumerate(psi_values) if v >= -active_tol]
    hulls: Dict[int, Polytope] = {}
    witnesses: Dict[int, List[np.ndarray]] = {}
    for i in binding:
        union = worst_case_subdiff(
            P.constraints[i], z, P.uncertainty, active_tol, grid
        )
        hulls[i] = union.hull()
        witnesses[i] = [
            rep.point
            for rep in active_uncertainty(
                P.constraints[i], z, P.uncertainty, active_tol, grid
            )
        ]
    return _StationarityData(
        Point.of(z), obj_subdiffs, psi_values, binding, hulls, witnesses
    )


# ---------------------------------------------------------------------------
# direction grid
# ---------------------------------------------------------------------------


def _simplex_indices(m: int, edge: int) -> np.ndarray:
    """Integer simplex directions in scan order.

    Scan order is ascending lexicographic on (i_2, ..., i_{m-1}, i_1); the
    last index is determined by the total.
    """
    N = edge
    if m == 1:
        return np.array([[N]])
    rows: List[Tuple[int, ...]] = []
    middles = itertools.product(*(range(N + 1) for _ in range(m - 2)))
    for mid in middles:
        s = sum(mid)
        if s > N:
            continue
        for i1 in range(N - s + 1):
            rows.append((i1, *mid, N - s - i1))
    return np.array(rows, dtype=np.int64)


def _piece_ranges(union: PolytopeUnion) -> Tuple[np.ndarray, np.ndarray]:
    """(n_pieces, d) per-piece vertex-coordinate minima and maxima."""
    mins = np.array([p.vertices.min(axis=0) for p in union.pieces])
    maxs = np.array([p.vertices.max(axis=0) for p in union.pieces])
    return mins, maxs


def _prefilter(Y: np.ndarray, data: _StationarityData, d: int) -> np.ndarray:
    """Keep directions where some piece selection can reach zero coordinatewise."""
    ranges = [_piece_ranges(s) for s in data.obj_subdiffs]
    cons_lo = np.zeros(d)
    cons_hi = np.zeros(d)
    for i in data.binding:
        a = data.hulls[i].vertices.min(axis=0)
        b = data.hulls[i].vertices.max(axis=0)
        cons_lo += np.where(a < -FILTER_TOL, -np.inf, 0.0)
        cons_hi += np.where(b > FILTER_TOL, np.inf, 0.0)
    counts = [len(mins) for mins, _ in ranges]
    survivors = np.zeros(len(Y), dtype=bool)
    total = int(np.prod(counts))
    if total > 64:
        # too many piece combinations: fall back to union-wide ranges (coarser
        # but still a sound necessary condition)
        selections = [tuple(0 for _ in counts)]
        ranges = [
            (mins.min(axis=0, keepdims=True), maxs.max(axis=0, keepdims=True))
            for mins, maxs in ranges
        ]
    else:
        selections = list(itertools.product(*(range(c) for c in counts)))
    for sel in selections:
        Pmin = np.array([ranges[j][0][k] for j, k in enumerate(sel)])
        Pmax = np.array([ranges[j][1][k] for j, k in enumerate(sel)])
        lo = Y @ Pmin + cons_lo
        hi = Y @ Pmax + cons_hi
        ok = np.all(lo <= FILTER_TOL, axis=1) & np.all(hi >= -FILTER_TOL, axis=1)
        survivors |= ok
        if survivors.all():
            break
    return survivors


# ---------------------------------------------------------------------------
# per-direction linear programs
# ---------------------------------------------------------------------------


def _selection_lp(piece_sets, hulls: List[np.ndarray], d: int,
                  balance_target: Optional[float] = None):
    """Feasibility (or balance) LP for one direction and piece selection.

    Variables: convex weights on each selected objective piece's vertices
    (scaled by the direction weight), products beta = mu * weight for each
    binding constraint hull vertex, and optionally a balance slack t.

    Returns (feasible, mu_totals, t_value).
    """
    blocks: List[np.ndarray] = []
    col_meta: List[Tuple[str, int]] = []
    for w, verts in piece_sets:
        blocks.append(w * verts.T)  # (d, n_vertices)
        col_meta.append(("lam", len(verts)))
    for verts in hulls:
        blocks.append(verts.T)
        col_meta.append(("beta", len(verts)))
    n_cols = sum(n for _, n in col_meta)
    station = np.hstack(blocks) if blocks else np.zeros((d, 0))

    eq_rows = [station]
    eq_rhs = [np.zeros(d)]
    col = 0
    for kind, n in col_meta:
        if kind == "lam":
            row = np.zeros(n_cols)
            row[col:col + n] = 1.0
            eq_rows.append(row[None, :])
            eq_rhs.append(np.ones(1))
        col += n
    A_eq = np.vstack(eq_rows)
    b_eq = np.concatenate(eq_rhs)

    beta_mask = np.zeros(n_cols)
    col = 0
    for kind, n in col_meta:
        if kind == "beta":
            beta_mask[col:col + n] = 1.0
        col += n

    if balance_target is None:
        res = linprog(
            np.zeros(n_cols), A_eq=A_eq, b_eq=b_eq,
            bounds=[(0, None)] * n_cols, method="highs",
        )
        if res.status != 0:
            return False, None, None
        return True, res.x, None

    # minimize |sum(beta) - target| with the same equalities
    c = np.zeros(n_cols + 1)
    c[-1] = 1.0
    A_eq2 = np.hstack([A_eq, np.zeros((len(A_eq), 1))])
    A_ub = np.vstack(
        [
            np.concatenate([beta_mask, [-1.0]]),
            np.concatenate([-beta_mask, [-1.0]]),
        ]
    )
    b_ub = np.array([balance_target, -balance_target])
    res = linprog(
        c, A_eq=A_eq2, b_eq=b_eq, A_ub=A_ub, b_ub=b_ub,
        bounds=[(0, None)] * n_cols + [(0, None)], method="highs",
    )
    if res.status != 0:
        return False, None, None
    return True, res.x[:-1], float(res.fun)


def _extract_mu(x: np.ndarray, piece_sets, hulls, binding: List[int],
                n_constraints: int) -> np.ndarray:
    mu = np.zeros(n_constraints)
    col = sum(len(verts) for _, verts in piece_sets)
    for i, verts in zip(binding, hulls):
        mu[i] = float(np.sum(x[col:col + len(verts)]))
        col += len(verts)
    return mu


def _direction_piece_sets(y: np.ndarray, data: _StationarityData,
                          selection: Tuple[int, ...], active_obj: List[int]):
    return [
        (float(y[j]), data.obj_subdiffs[j].pieces[selection[idx]].vertices)
        for idx, j in enumerate(active_obj)
    ]


# ---------------------------------------------------------------------------
# geometric residual (shared with verification)
# ---------------------------------------------------------------------------


def _stationarity_union(y: np.ndarray, obj_subdiffs: Sequence[PolytopeUnion],
                        mu: np.ndarray, hulls: Dict[int, Polytope],
                        d: int) -> PolytopeUnion:
    """Explicit union for  sum_j y_j dF_j + sum_i mu_i H_i."""
    out = PolytopeUnion([Polytope(np.zeros((1, d)))])
    for j, s in enumerate(obj_subdiffs):
        if abs(y[j]) <= MU_ZERO_TOL:
            continue
        out = out.minkowski_sum(s.scale(float(y[j])))
    for i, hull in hulls.items():
        if mu[i] <= MU_ZERO_TOL:
            continue
        out = out.minkowski_sum(PolytopeUnion([hull.scale(float(mu[i]))]))
    return out


def _residual(y, obj_subdiffs, mu, hulls, d) -> float:
    union = _stationarity_union(y, obj_subdiffs, mu, hulls, d)
    return float(union.distance(np.zeros(d)))


# ---------------------------------------------------------------------------
# certificate search
# ---------------------------------------------------------------------------


def find_kkt_certificate(P: Problem, z, options: Optional[KktOptions] = None
                         ) -> KktCertificate:
    opts = options or KktOptions()
    if opts.y_grid < 2:
        raise ValueError("y_grid must be at least 2 points per edge")
    if opts.mode not in ("outer", "exact"):
        raise ValueError("mode must be 'outer' or 'exact'")
    z = np.asarray(z, dtype=float)
    d = P.decision_dim
    m = P.n_objectives
    data = _prepare(P, z, opts.active_tol, opts.grid)

    edge = opts.y_grid - 1
    indices = _simplex_indices(m, edge)
    Y = indices.astype(float) / edge
    keep = _prefilter(Y, data, d)
    hull_list = [data.hulls[i].vertices for i in data.binding]

    lp_budget = opts.max_lp
    for row in np.flatnonzero(keep):
        y = Y[row]
        found = _try_direction(P, y, data, hull_list, d, opts)
        if found is not None:
            mu_hat, mode_used = found
            return _finalize(P, z, y, mu_hat, data, d, mode_used)
        lp_budget -= 1
        if lp_budget <= 0:
            break

    # no weighted certificate: try the degenerate (zero-weight) form
    fj = _fritz_john(data, hull_list, d, P.n_constraints)
    if fj is not None:
        return _finalize(P, z, np.zeros(m), fj, data, d, opts.mode,
                         fritz_john=True)

    best_res, best_dir = _coarse_residual_scan(data, d, m)
    raise NotFoundAtResolution(
        f"no certificate on the {opts.y_grid}-point direction grid",
        best_res, best_dir,
    )


def _try_direction(P, y, data, hull_list, d, opts):
    if opts.mode == "exact":
        return _try_direction_exact(P, y, data, hull_list, d)
    active_obj = [j for j in range(len(y)) if y[j] > 0]
    counts = [len(data.obj_subdiffs[j].pieces) for j in active_obj]
    feasible = []
    for sel in itertools.product(*(range(c) for c in counts)):
        piece_sets = _direction_piece_sets(y, data, sel, active_obj)
        ok, x, _ = _selection_lp(piece_sets, hull_list, d)
        if ok:
            feasible.append(piece_sets)
    if not feasible:
        return None
    return _balance(y, feasible, hull_list, data, P.n_constraints), "outer"


def _balance(y, feasible, hull_list, data, n_constraints):
    """Canonical multipliers: total closest to |y|_2; ties go to the first."""
    d = len(hull_list[0][0]) if hull_list else len(feasible[0][0][1][0])
    target = float(np.linalg.norm(y))
    best = None
    for piece_sets in feasible:
        ok, x, t = _selection_lp(piece_sets, hull_list, d,
                                 balance_target=target)
        if not ok:
            continue
        mu = _extract_mu(x, piece_sets, hull_list, data.binding, n_constraints)
        if best is None or t < best[0] - 1e-12:
            best = (t, mu)
    if best is None:  # fall back to plain feasibility of the first selection
        piece_sets = feasible[0]
        _, x, _ = _selection_lp(piece_sets, hull_list, d)
        return _extract_mu(x, piece_sets, hull_list, data.binding, n_constraints)
    return best[1]


def _try_direction_exact(P, y, data, hull_list, d):
    """Exact-scalarization stationarity for one direction (when available)."""
    try:
        sc = scalarized_subdiff(y, P.objectives, data.point)
    except UnsupportedComposition:
        return None
    union = sc.best
    mode_used = "exact" if sc.exact is not None else "outer"
    feasible = []
    for piece in union.pieces:
        piece_sets = [(1.0, piece.vertices)]
        ok, x, _ = _selection_lp(piece_sets, hull_list, d)
        if ok:
            feasible.append(piece_sets)
    if not feasible:
        return None
    mu = _balance(y, feasible, hull_list, data, P.n_constraints)
    return mu, mode_used


def _fj_solve(hull_list, d) -> Optional[np.ndarray]:
    """Zero in the multiplier combination alone, total weight pinned to one."""
    if not hull_list:
        return None
    n_cols = sum(len(v) for v in hull_list)
    A_eq = np.vstack(
        [np.hstack([v.T for v in hull_list]), np.ones((1, n_cols))]
    )
    b_eq = np.concatenate([np.zeros(d), [1.0]])
    res = linprog(np.zeros(n_cols), A_eq=A_eq, b_eq=b_eq,
                  bounds=[(0, None)] * n_cols, method="highs")
    if res.status != 0:
        return None
    return res.x


def _fritz_john(data, hull_list, d, n_constraints) -> Optional[np.ndarray]:
    x = _fj_solve(hull_list, d)
    if x is None:
        return None
    return _extract_mu(x, [], hull_list, data.binding, n_constraints)


def _finalize(P, z, y_hat, mu_hat, data, d, mode_used,
              fritz_john: bool = False) -> KktCertificate:
    norm_y = float(np.linalg.norm(y_hat))
    norm_mu = float(np.linalg.norm(mu_hat))
    if norm_y + norm_mu <= MU_ZERO_TOL:
        raise NotFoundAtResolution("degenerate certificate scale", np.inf, None)
    kappa = 1.0 / (norm_y + norm_mu)
    y_star = kappa * y_hat
    mu = kappa * mu_hat
    witnesses: List[List[np.ndarray]] = []
    for i in range(P.n_constraints):
        if i in data.witnesses and mu[i] > MU_ZERO_TOL:
            witnesses.append([np.asarray(u, dtype=float) for u in data.witnesses[i]])
        else:
            witnesses.append([])
    if mode_used == "exact":
        sc = scalarized_subdiff(y_star, P.objectives, Point.of(z))
        subdiffs = [sc.best]
        y_res = np.ones(1)
    else:
        subdiffs = data.obj_subdiffs
        y_res = y_star
    residual = _residual(y_res, subdiffs, mu, data.hulls, d)
    fj_also = _fj_solve(
        [data.hulls[i].vertices for i in data.binding], d
    ) is not None
    return KktCertificate(
        y_star=y_star,
        mu=mu,
        witnesses=witnesses,
        residual=residual,
        mode=mode_used,
        fritz_john=fritz_john,
        fritz_john_also=fj_also,
    )


def _coarse_residual_scan(data, d, m) -> Tuple[float, Optional[np.ndarray]]:
    """Smallest infinity-norm stationarity residual on a coarse direction grid."""
    indices = _simplex_indices(m, COARSE_EDGE)
    Y = indices.astype(float) / COARSE_EDGE
    hull_list = [data.hulls[i].vertices for i in data.binding]
    best = (np.inf, None)
    for y in Y:
        active_obj = [j for j in range(m) if y[j] > 0]
        counts = [len(data.obj_subdiffs[j].pieces) for j in active_obj]
        for sel in itertools.product(*(range(c) for c in counts)):
            piece_sets = _direction_piece_sets(y, data, sel, active_obj)
            r = _slack_lp(piece_sets, hull_list, d)
            if r is not None and r < best[0]:
                best = (r, y.copy())
    return best


def _slack_lp(piece_sets, hulls, d) -> Optional[float]:
    """min |stationarity sum|_inf over the same variable structure."""
    blocks: List[np.ndarray] = []
    meta: List[Tuple[str, int]] = []
    for w, verts in piece_sets:
        blocks.append(w * verts.T)
        meta.append(("lam", len(verts)))
    for verts in hulls:
        blocks.append(verts.T)
        meta.append(("beta", len(verts)))
    n_cols = sum(n for _, n in meta)
    if n_cols == 0:
        return None
    station = np.hstack(blocks)
    c = np.zeros(n_cols + 1)
    c[-1] = 1.0
    A_ub = np.vstack(
        [
            np.hstack([station, -np.ones((d, 1))]),
            np.hstack([-station, -np.ones((d, 1))]),
        ]
    )
    b_ub = np.zeros(2 * d)
    eq_rows = []
    eq_rhs = []
    col = 0
    for kind, n in meta:
        if kind == "lam":
            row = np.zeros(n_cols + 1)
            row[col:col + n] = 1.0
            eq_rows.append(row)
            eq_rhs.append(1.0)
        col += n
    A_eq = np.vstack(eq_rows) if eq_rows else None
    b_eq = np.array(eq_rhs) if eq_rows else None
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                  bounds=[(0, None)] * n_cols + [(0, None)], method="highs")
    if res.status != 0:
        return None
    return float(res.fun)


# ---------------------------------------------------------------------------
# certificate verification (independent geometric route)
# ---------------------------------------------------------------------------


@dataclass
class VerificationReport:
    ok: bool
    checks: Dict[str, bool]
    stationarity_distance: float
    details: Dict[str, str] = field(default_factory=dict)

    def to_jsonable(self) -> dict:
        return {
            "ok": bool(self.ok),
            "checks": {k: bool(v) for k, v in self.checks.items()},
            "stationarity_distance": float(self.stationarity_distance),
            "details": dict(self.details),
        }


def verify_certificate(P: Problem, z, cert: KktCertificate,
                       tol: float = RESIDUAL_TOL,
                       grid: int = GRID_DEFAULT) -> VerificationReport:
    z = np.asarray(z, dtype=float)
    d = P.decision_dim
    checks: Dict[str, bool] = {}
    details: Dict[str, str] = {}
    y = np.asarray(cert.y_star, dtype=float)
    mu = np.asarray(cert.mu, dtype=float)

    psi_vals = constraint_values(P, z, grid)

    # stationarity by explicit geometry
    hulls: Dict[int, Polytope] = {}
    for i in range(P.n_constraints):
        if mu[i] > MU_ZERO_TOL:
            hulls[i] = worst_case_subdiff(
                P.constraints[i], z, P.uncertainty, ACTIVE_TOL, grid
            ).hull()
    if cert.mode == "exact":
        sc = scalarized_subdiff(y, P.objectives, Point.of(z))
        subdiffs = [sc.best]
        y_eff = np.ones(1)
    else:
        subdiffs = [
            limiting_subdiff(f, Point.of(z), wrt="decision") for f in P.objectives
        ]
        y_eff = y
    distance = _residual(y_eff, subdiffs, mu, hulls, d)
    checks["stationarity"] = distance <= tol
    details["stationarity"] = f"distance {distance:.3e}"

    # complementarity
    comp = float(np.max(np.abs(mu * psi_vals), initial=0.0))
    checks["complementarity"] = comp <= tol
    details["complementarity"] = f"max |mu_i * worst_case_i| = {comp:.3e}"

    # witnesses attain the worst case and belong to the uncertainty set
    wit_ok = True
    for i in range(P.n_constraints):
        if mu[i] <= MU_ZERO_TOL:
            continue
        per = cert.witnesses[i] if i < len(cert.witnesses) else []
        if not per:
            wit_ok = False
            details.setdefault("witnesses", f"constraint {i + 1} has no witness")
            continue
        for u in per:
            if not P.uncertainty.contains(u, 1e-9):
                wit_ok = False
                details.setdefault(
                    "witnesses", f"witness outside the uncertainty set: {u}"
                )
                continue
            val = evaluate(P.constraints[i], Point.of(z, u))
            if val < psi_vals[i] - 1e-6:
                wit_ok = False
                details.setdefault(
                    "witnesses",
                    f"witness for constraint {i + 1} is not worst-case "
                    f"({val:.6g} < {psi_vals[i]:.6g})",
                )
    checks["witnesses"] = wit_ok

    # cone conditions
    checks["dual_cone"] = P.cone.dual_contains(y, 1e-9)
    checks["mu_nonnegative"] = bool(np.all(mu >= -MU_ZERO_TOL))

    # nondegeneracy and normalization
    checks["weights_nonzero"] = bool(
        np.max(np.abs(y), initial=0.0) > 1e-9 or cert.fritz_john
    )
    norm_sum = float(np.linalg.norm(y) + np.linalg.norm(mu))
    checks["normalization"] = abs(norm_sum - 1.0) <= 1e-9
    details["normalization"] = f"|y|_2 + |mu|_2 = {norm_sum:.12f}"

    ok = all(checks.values())
    return VerificationReport(ok, checks, float(distance), details)


# ---------------------------------------------------------------------------
# necessary condition for proper efficiency
# ---------------------------------------------------------------------------


@dataclass
class ProperNecessaryReport:
    ok: bool
    interior_margin: float
    min_value: float
    argmin: np.ndarray
    feasible_points: int

    def to_jsonable(self) -> dict:
        return {
            "ok": bool(self.ok),
            "interior_margin": float(self.interior_margin),
            "min_value": float(self.min_value),
            "argmin": [float(v) for v in np.atleast_1d(self.argmin)],
            "feasible_points": int(self.feasible_points),
        }


def check_proper_necessary(P: Problem, z, y_star, grid: int = 101,
                           tol: float = 1e-9,
                           ugrid: int = GRID_DEFAULT) -> ProperNecessaryReport:
    """Scan: does z minimize <y_star, f> over the feasible box grid?

    A positive-interior weight vector whose scalarization is minimized at z is
    the defining witness of proper behavior; this checks the minimization on a
    finite grid (necessary-side evidence, not a proof over the continuum).
    """
    z = np.asarray(z, dtype=float)
    y = np.asarray(y_star, dtype=float)
    Z = P.box_grid(grid)
    feas = np.ones(len(Z), dtype=bool)
    for g in P.constraints:
        feas &= worst_case_values_batch(g, Z, P.uncertainty, ugrid) <= tol
    margin = P.cone.dual_margin(y)
    if not np.any(feas):
        return ProperNecessaryReport(False, float(margin), np.inf,
                                     np.full(P.decision_dim, np.nan), 0)
    F = P.objective_values_batch(Z[feas])
    base = P.objective_values(z)
    scores = (F - base) @ y
    idx = int(np.argmin(scores))
    min_value = float(scores[idx])
    ok = min_value >= -tol and margin > 0
    return ProperNecessaryReport(
        ok=ok,
        interior_margin=float(margin),
        min_value=min_value,
        argmin=Z[feas][idx],
        feasible_points=int(np.sum(feas)),
    )
