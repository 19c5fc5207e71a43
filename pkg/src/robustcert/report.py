"""Report assembly for the command-line interface.

Each section builder returns a plain JSON-able dict; ``build_report`` wraps
one or more sections with a config echo and a provenance block.  Rendering is
deterministic: identical inputs produce byte-identical JSON except for the
``generated_at`` timestamp.
"""

from __future__ import annotations

import json
from datetime import datetime, timezone
from typing import Optional

import numpy as np

from . import __version__
from .constraints import (ACTIVE_TOL, FEAS_TOL, GRID_DEFAULT, Problem,
                          active_index_set, active_uncertainty,
                          constraint_values, is_robust_feasible,
                          worst_case_subdiff, zero_active_set)
from .expr import Point
from .convexity import DEFAULT_SAMPLES, DEFAULT_Y_EDGE, classify_type
from .duality import (DualTriple, converse_duality_check, is_dual_feasible,
                      strong_duality_construct, weak_duality_test)
from .efficiency import (EFFICIENCY_GRID, certify_efficient, certify_proper,
                         certify_weak, grid_context)
from .kkt import (RESIDUAL_TOL, KktCertificate, KktOptions,
                  NotFoundAtResolution, check_cq, find_kkt_certificate,
                  verify_certificate)
from .subdiff import limiting_subdiff

SCHEMA_VERSION = 1
PROPER_EPS = 1e-3


# ---------------------------------------------------------------------------
# per-check sections
# ---------------------------------------------------------------------------


def feasibility_section(P: Problem, z, tol: float = FEAS_TOL,
                        ugrid: int = GRID_DEFAULT) -> dict:
    z = np.asarray(z, dtype=float)
    psi = constraint_values(P, z, ugrid)
    maximizers = []
    for g in P.constraints:
        reals = active_uncertainty(g, z, P.uncertainty, ACTIVE_TOL, ugrid)
        maximizers.append([
            {
                "point": [float(v) for v in r.point],
                "value": float(r.value),
                "extent": float(r.extent),
            }
            for r in reals
        ])
    return {
        "feasible": bool(is_robust_feasible(P, z, tol, ugrid)),
        "tol": float(tol),
        "ugrid": int(ugrid),
        "psi": [float(v) for v in psi],
        "objective_values": [float(v) for v in P.objective_values(z)],
        "active_max_relative": [int(i) for i in
                                active_index_set(P, z, ACTIVE_TOL, ugrid)],
        "active_zero_relative": [int(i) for i in
                                 zero_active_set(P, z, ACTIVE_TOL, ugrid)],
        "worst_case_maximizers": maximizers,
    }


def subdiff_section(P: Problem, z, ugrid: int = GRID_DEFAULT) -> dict:
    z = np.asarray(z, dtype=float)
    pt = Point.of(z)
    return {
        "objectives": [
            limiting_subdiff(f, pt, wrt="decision").to_jsonable()
            for f in P.objectives
        ],
        "worst_case_constraints": [
            worst_case_subdiff(g, z, P.uncertainty, ACTIVE_TOL,
                               ugrid).to_jsonable()
            for g in P.constraints
        ],
    }


def cq_section(P: Problem, z, tol: float = ACTIVE_TOL,
               ugrid: int = GRID_DEFAULT) -> dict:
    out = check_cq(P, z, tol, ugrid).to_jsonable()
    out["tol"] = float(tol)
    return out


def kkt_section(P: Problem, z, options: Optional[KktOptions] = None) -> dict:
    opts = options or KktOptions()
    out: dict = {"y_grid": int(opts.y_grid), "tol": float(opts.tol),
                 "mode": opts.mode}
    try:
        cert = find_kkt_certificate(P, z, opts)
    except NotFoundAtResolution as exc:
        out["found"] = False
        out["message"] = str(exc)
        out["best_residual"] = (None if exc.best_residual is None
                                else float(exc.best_residual))
        out["best_direction"] = (None if exc.best_direction is None
                                 else [float(v) for v in exc.best_direction])
        return out
    out["found"] = True
    out["certificate"] = cert.to_jsonable()
    out["verification"] = verify_certificate(P, z, cert, opts.tol,
                                             opts.grid).to_jsonable()
    return out


def convexity_section(P: Problem, z, samples: int = DEFAULT_SAMPLES,
                      seed: int = 0, y_edge: int = DEFAULT_Y_EDGE,
                      ugrid: int = GRID_DEFAULT) -> dict:
    cls = classify_type(P, z, samples, seed, y_edge, ugrid)
    out = cls.to_jsonable()
    out["samples"] = int(samples)
    out["seed"] = int(seed)
    out["y_edge"] = int(y_edge)
    return out


def efficiency_section(P: Problem, z, grid: int = EFFICIENCY_GRID,
                       ugrid: int = GRID_DEFAULT,
                       eps: float = PROPER_EPS) -> dict:
    ctx = grid_context(P, grid, ugrid)
    return {
        "grid": int(grid),
        "box": {
            "lower": [float(v) for v in P.box_lower],
            "upper": [float(v) for v in P.box_upper],
        },
        "weak": certify_weak(P, z, grid, ugrid, ctx).to_jsonable(),
        "efficient": certify_efficient(P, z, grid, ugrid, ctx).to_jsonable(),
        "proper": certify_proper(P, z, grid, eps, ugrid, ctx).to_jsonable(),
    }


def duality_section(P: Problem, z=None, triple: Optional[DualTriple] = None,
                    cert: Optional[KktCertificate] = None,
                    strict: bool = False, tol: float = RESIDUAL_TOL,
                    grid: int = EFFICIENCY_GRID,
                    ugrid: int = GRID_DEFAULT) -> dict:
    """Dual-side suite at a triple.

    The triple may be supplied directly or derived from a certificate at z;
    when neither is available the section reports itself skipped.
    """
    if triple is None:
        if cert is None or z is None:
            return {"skipped": "no dual triple available "
                               "(no certificate found at this point)"}
        triple = strong_duality_construct(P, z, cert)
    mode = "strict" if strict else "default"
    ctx = grid_context(P, grid, ugrid)
    feas = is_dual_feasible(P, triple, mode, tol, ugrid)
    out = {
        "triple": triple.to_jsonable(),
        "mode": mode,
        "tol": float(tol),
        "feasibility": feas.to_jsonable(),
        "weak_typeI": weak_duality_test(P, triple, "typeI", grid, ugrid,
                                        ctx).to_jsonable(),
        "weak_typeII": weak_duality_test(P, triple, "typeII", grid, ugrid,
                                         ctx).to_jsonable(),
        "converse": converse_duality_check(P, triple, grid, ugrid,
                                           ctx).to_jsonable(),
    }
    return out


# ---------------------------------------------------------------------------
# consolidated assembly
# ---------------------------------------------------------------------------


def build_report(P: Problem, command: str, z, *, tol: float = RESIDUAL_TOL,
                 grid: int = EFFICIENCY_GRID, ugrid: int = GRID_DEFAULT,
                 ygrid: int = 721, seed: int = 42,
                 samples: int = DEFAULT_SAMPLES,
                 triple: Optional[DualTriple] = None, strict_dual: bool = False,
                 exact_scalarization: bool = False, problem_path: str = "",
                 point_text: str = "") -> dict:
    """Run the checks requested by ``command`` and assemble one report dict."""
    opts = KktOptions(y_grid=ygrid, tol=tol,
                      mode="exact" if exact_scalarization else "outer",
                      grid=ugrid)
    report: dict = {
        "schema": SCHEMA_VERSION,
        "command": command,
        "config": {
            "problem": problem_path,
            "point": point_text,
            "tol": float(tol),
            "grid": int(grid),
            "ugrid": int(ugrid),
            "ygrid": int(ygrid),
            "seed": int(seed),
            "samples": int(samples),
            "strict_dual": bool(strict_dual),
            "exact_scalarization": bool(exact_scalarization),
        },
        "provenance": {
            "tool": "robustcert",
            "version": __version__,
            "label": P.label,
            "generated_at": datetime.now(timezone.utc).isoformat(),
        },
    }
    if command == "check":
        report["feasibility"] = feasibility_section(P, z, tol, ugrid)
    elif command == "cq":
        report["cq"] = cq_section(P, z, ugrid=ugrid)
    elif command == "kkt":
        report["kkt"] = kkt_section(P, z, opts)
    elif command == "efficiency":
        report["efficiency"] = efficiency_section(P, z, grid, ugrid)
    elif command == "convexity":
        report["convexity"] = convexity_section(P, z, samples, seed,
                                                ugrid=ugrid)
    elif command == "dual":
        cert = None
        if triple is None:
            kkt = kkt_section(P, z, opts)
            if kkt["found"]:
                cert = KktCertificate.from_jsonable(kkt["certificate"])
            report["kkt"] = kkt
        report["duality"] = duality_section(P, z, triple, cert, strict_dual,
                                            tol, grid, ugrid)
    elif command == "report":
        report["feasibility"] = feasibility_section(P, z, tol, ugrid)
        report["subdifferentials"] = subdiff_section(P, z, ugrid)
        report["cq"] = cq_section(P, z, ugrid=ugrid)
        report["kkt"] = kkt_section(P, z, opts)
        report["convexity"] = convexity_section(P, z, samples, seed,
                                                ugrid=ugrid)
        report["efficiency"] = efficiency_section(P, z, grid, ugrid)
        cert = None
        if report["kkt"]["found"]:
            cert = KktCertificate.from_jsonable(report["kkt"]["certificate"])
        report["duality"] = duality_section(P, z, triple, cert, strict_dual,
                                            tol, grid, ugrid)
    else:
        raise ValueError(f"unknown command {command!r}")
    return report


# ---------------------------------------------------------------------------
# rendering
# ---------------------------------------------------------------------------


def render_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def _flatten(prefix: str, obj, lines: list) -> None:
    if isinstance(obj, dict):
        for key in sorted(obj):
            _flatten(f"{prefix}.{key}" if prefix else key, obj[key], lines)
    elif isinstance(obj, list) and obj and isinstance(obj[0], (dict, list)):
        for idx, item in enumerate(obj):
            _flatten(f"{prefix}[{idx}]", item, lines)
    else:
        if isinstance(obj, bool):
            text = "true" if obj else "false"
        elif isinstance(obj, list):
            text = "[" + ", ".join(_scalar(v) for v in obj) + "]"
        else:
            text = _scalar(obj)
        lines.append(f"{prefix}: {text}")


def _scalar(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return "none"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def render_text(report: dict) -> str:
    """Flat key/value rendering carrying exactly the JSON report's verdicts."""
    head = (f"robustcert {report['provenance']['version']} — "
            f"{report['command']} @ {report['config']['problem']} "
            f"point ({report['config']['point']})")
    lines = [head, "=" * len(head)]
    for section in sorted(report):
        if section in ("schema", "command", "config", "provenance"):
            continue
        lines.append("")
        lines.append(f"[{section}]")
        body: list = []
        _flatten("", report[section], body)
        lines.extend(body)
    return "\n".join(lines) + "\n"
