"""Run the estimate checks of a scenario against its trajectory."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import estimates as E
from .errors import (DegenerateMetric, HypothesisViolated, InsufficientData, BadAnchor,
                     PreconditionUnsatisfied, RadiusTooLarge, Unsupported, FitDiverged)
from .flow import (Trajectory, check_curvature_evolution_curve, check_metric_evolution,
                   check_volume_evolution, single_step_trajectory, stable_step)
from .geometry import GraphData
from .immersion import Kind
from .records import CheckRecord
from .singularity import displacement_bound_check, estimate_singular_time, parabolic_rescale

CHECK_IDS = ("identities", "evolution", "graph_estimates", "graph_radius", "injectivity",
             "ball_inclusion", "metric_equivalence", "integrated_estimate", "volume_growth",
             "displacement_bound")


@dataclass(frozen=True)
class Tolerances:
    """identity: relative, for exact algebraic identities; inequality: relative
    slack allowed on inequalities; geodesic: relative, for discrete geodesics
    and ball volumes."""

    identity: float
    inequality: float
    geodesic: float
    contract_factor: float


TOLERANCE_PROFILES = {
    "default": Tolerances(1e-12, 1e-10, 0.05, 10.0),
    "strict": Tolerances(1e-13, 1e-12, 0.05, 5.0),
}


def _skipped(check_id, sid, reason):
    return CheckRecord(check_id, sid, 0.0, {}, 0.0, status="skipped", details={"reason": reason})


def _failed(check_id, sid, reason):
    return CheckRecord(check_id, sid, float("-inf"), {}, 0.0, status="failed",
                       details={"reason": reason})


def resolve_checks(checks) -> list:
    if checks is None or "all" in checks:
        return list(CHECK_IDS)
    unknown = [c for c in checks if c not in CHECK_IDS]
    if unknown:
        raise ValueError(f"unknown check ids {unknown}; choose from {list(CHECK_IDS)}")
    return [c for c in CHECK_IDS if c in checks]


def identity_records(traj: Trajectory, tol: Tolerances):
    """Algebraic identities on every snapshot with a non-degenerate metric."""
    merged = {}
    for k in E.usable_snapshots(traj):
        for rec in E.identity_checks(traj.geometry(k), traj.scenario_id, tol.identity,
                                     tol.inequality):
            rec.worst_location = dict(rec.worst_location, snapshot=k)
            prev = merged.get(rec.check_id)
            if prev is None or rec.worst_margin < prev.worst_margin:
                merged[rec.check_id] = rec
    return list(merged.values())


def evolution_records(traj: Trajectory, tol: Tolerances):
    """One Euler step from the first flowed snapshot; residual within the truncation contract.

    The flowed state is used because initial data may be glued with only two
    continuous derivatives, where the finite-difference identities hold only
    to O(1) at the junction.
    """
    k = min(1, len(traj.snapshots) - 1)
    imm = traj.snapshots[k].imm
    geom = traj.geometry(k)
    one = single_step_trajectory(imm, stable_step(imm, geom, 0.2), traj.scenario_id, traj.band)
    checks = [check_metric_evolution, check_volume_evolution]
    if imm.kind is Kind.CLOSED_CURVE and imm.n == 1:
        checks.append(check_curvature_evolution_curve)
    out = []
    for fn in checks:
        r = fn(one, 0)
        bound = tol.contract_factor * r.truncation
        details = {"normalized_residual": r.normalized, "truncation": r.truncation,
                   "dt": r.dt, "spacing": r.spacing}
        details.update(r.extra)
        out.append(CheckRecord(f"evolution_{r.name}", traj.scenario_id, bound - r.normalized,
                               {"sample": r.location, "snapshot": k}, 0.0, "relative",
                               details=details))
        if "volume_nonincreasing" in r.extra:
            out.append(CheckRecord("volume_nonincreasing", traj.scenario_id,
                                   r.extra["volume_before"] - r.extra["volume_after"], {},
                                   1e-14 * r.extra["volume_before"], "volume"))
    return out


def graph_records(spec, tol: Tolerances):
    if spec is None or spec.shape_type != "Graph":
        return [_skipped(c, getattr(spec, "name", ""), "scenario is not a graph")
                for c in ("hessian_bound", "eigen_bound", "graph_II_crosscheck")]
    gd = GraphData.from_polynomial(spec.polynomial(), spec.shape["r"], spec.resolution)
    return [E.hessian_bound_check(gd, spec.name, tol.inequality),
            E.eigen_bound_check(gd, spec.name, tol.inequality),
            E.graph_crosscheck(gd, spec.name)]


def volume_growth_record(traj: Trajectory, radii, levels, tol: Tolerances):
    """volume_growth_check on the deepest rescaled level snapshot."""
    sid = traj.scenario_id
    if not traj.singular:
        return _skipped("volume_growth", sid, "trajectory not singular: no rescaled state")
    avail = sorted(j for j in traj.level_indices() if 1 <= j <= levels)
    if not avail:
        return _skipped("volume_growth", sid, "no level snapshots")
    entry = parabolic_rescale(traj, picks=[avail[-1]])[0]
    rec = E.volume_growth_check(entry.imm, entry.p_j, radii, sid, tol=tol.geodesic)
    rec.worst_location = dict(rec.worst_location, level=entry.j)
    return rec


def integrated_record(traj: Trajectory, opts, tol: Tolerances):
    sid = traj.scenario_id
    if not traj.singular:
        return _skipped("integrated_estimate", sid, "trajectory not singular")
    idx = traj.level_indices()
    level = int(opts.get("level", 1))
    if level not in idx:
        return _skipped("integrated_estimate", sid, f"level {level} not reached")
    T = estimate_singular_time(traj).T_est
    try:
        return E.integrated_estimate_check(traj, float(opts["p"]), float(opts["C"]), 0,
                                           idx[level], T, sid, tol.inequality)
    except PreconditionUnsatisfied as exc:
        return _skipped("integrated_estimate", sid, f"PreconditionUnsatisfied: {exc}")


def verify_trajectory(traj: Trajectory, spec=None, checks=None,
                      tolerance_profile: str = "default") -> list:
    """All requested checks as CheckRecords, ordered by check id then name.

    ``spec`` supplies the per-scenario options (anchors, radii, ...); without
    it the schema defaults are used.
    """
    from .scenarios import VERIFY_DEFAULTS, ANALYSIS_DEFAULTS
    tol = TOLERANCE_PROFILES[tolerance_profile]
    opts = dict(VERIFY_DEFAULTS, **(spec.verify if spec is not None else {}))
    levels = (spec.analysis if spec is not None else ANALYSIS_DEFAULTS)["levels"]
    sid = traj.scenario_id
    imm0 = traj.snapshots[0].imm
    records = []
    for cid in resolve_checks(checks):
        try:
            if cid == "identities":
                records += identity_records(traj, tol)
            elif cid == "evolution":
                records += evolution_records(traj, tol)
            elif cid == "graph_estimates":
                records += graph_records(spec, tol)
            elif cid == "graph_radius":
                if imm0.kind is Kind.DISC_GRAPH:
                    records.append(_skipped("graph_radius", sid, "graph radius needs a closed submanifold"))
                else:
                    records.append(E.graph_radius_sweep(imm0, opts["graph_anchors"], opts["alpha"], sid))
            elif cid == "injectivity":
                if imm0.kind is Kind.DISC_GRAPH:
                    records.append(_skipped("injectivity_bound", sid, "Unsupported for DiscGraph"))
                else:
                    kw = {}
                    if imm0.kind is Kind.ROTATIONAL_PROFILE:
                        N = imm0.grid_shape[0]
                        kw["anchors"] = np.unique(np.linspace(
                            0, (N - 1) // 2, opts["injectivity_anchors"]).round().astype(int))
                    records.append(E.injectivity_bound_check(imm0, sid, tol=tol.geodesic, **kw))
            elif cid == "ball_inclusion":
                if imm0.kind is Kind.DISC_GRAPH:
                    records.append(_skipped("ball_inclusion", sid, "Unsupported for DiscGraph"))
                else:
                    worst, _ = E.ball_inclusion_suite(traj, opts["ball_pairs"], sid)
                    records.append(worst)
            elif cid == "metric_equivalence":
                records.append(E.metric_equivalence_check(traj, sid, tol.inequality))
            elif cid == "integrated_estimate":
                records.append(integrated_record(traj, opts["integrated"], tol))
            elif cid == "volume_growth":
                records.append(volume_growth_record(traj, opts["volume_radii"], levels, tol))
            elif cid == "displacement_bound":
                records.append(displacement_bound_check(traj, tol.inequality))
        except (HypothesisViolated, RadiusTooLarge, DegenerateMetric, InsufficientData,
                BadAnchor, FitDiverged) as exc:
            records.append(_failed(cid, sid, f"{type(exc).__name__}: {exc}"))
        except Unsupported as exc:
            records.append(_skipped(cid, sid, f"Unsupported: {exc}"))
    return records


def seeded_graph_suite(tolerance_profile: str = "default", base_seed: int = 0):
    """The randomized graph sweeps: 100 cubic D^2 -> R^2 and 50 quadratic D^2 -> R^3."""
    tol = TOLERANCE_PROFILES[tolerance_profile]
    hess = E.random_graph_suite(lambda gd, sid: E.hessian_bound_check(gd, sid, tol.inequality),
                                2, 2, 3, 100, base_seed=base_seed)
    eig = E.random_graph_suite(lambda gd, sid: E.eigen_bound_check(gd, sid, tol.inequality),
                               2, 3, 2, 50, base_seed=base_seed)
    return [hess, eig]


def summarize(records) -> dict:
    return {"checks": len(records), "passed": sum(r.passed for r in records),
            "failed": sum(not r.passed for r in records),
            "skipped": sum(r.status == "skipped" for r in records),
            "all_pass": all(r.passed for r in records)}
