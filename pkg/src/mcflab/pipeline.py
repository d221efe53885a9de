"""Batch driver: simulate, analyze, verify and rescale one scenario.

Output directory layout::

    <out>/trajectory/      index.json, diagnostics.csv, snapshot_*.csv
    <out>/analysis.json    fits, classification, growth table, rescale residuals
    <out>/verification.json  CheckRecords plus a summary
    <out>/rescale.json     rescaling levels; rescaled states in <out>/rescaled/
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from . import io
from .flow import run
from .scenarios import ScenarioSpec
from .singularity import NORMALIZATION_TOL, SCALING_TOL, analysis_report, parabolic_rescale
from .verify import seeded_graph_suite, summarize, verify_trajectory

STAGES = ("simulate", "analyze", "verify", "rescale")
EXIT_OK, EXIT_CHECK_FAILED, EXIT_RUNTIME = 0, 1, 2


@dataclass
class PipelineResult:
    status: int
    artifacts: dict = field(default_factory=dict)
    messages: list = field(default_factory=list)


def default_out(spec: ScenarioSpec) -> Path:
    return Path(spec.output or Path("out") / spec.name)


def simulate(spec: ScenarioSpec, out) -> Path:
    traj = run(spec.flow_config())
    d = Path(out) / "trajectory"
    io.write_trajectory(traj, d, spec.to_dict())
    return d


def analyze(traj, spec: ScenarioSpec | None, out) -> Path:
    levels = spec.analysis["levels"] if spec is not None else 6
    report = analysis_report(traj, levels)
    path = Path(out) / "analysis.json"
    io.write_json(path, report)
    return path


def verify(traj, spec, out, checks=None, tolerance_profile="default", seed=None):
    """Write verification.json; returns (path, all_pass)."""
    if checks is None and spec is not None:
        checks = spec.verify["checks"]
    records = verify_trajectory(traj, spec, checks, tolerance_profile)
    if spec is not None and spec.shape_type == "Graph" and (checks is None or "all" in checks
                                                            or "graph_estimates" in checks):
        records += seeded_graph_suite(tolerance_profile,
                                      spec.seed if seed is None else int(seed))
    summary = summarize(records)
    report = {"scenario": traj.scenario_id, "tolerance_profile": tolerance_profile,
              "summary": summary, "records": [r.to_dict() for r in records]}
    path = Path(out) / "verification.json"
    io.write_json(path, report)
    return path, summary["all_pass"]


def rescale(traj, levels: int, out):
    """Write rescale.json and rescaled snapshot tables; returns (path, all_pass)."""
    avail = sorted(j for j in traj.level_indices() if 1 <= j <= levels)
    entries = parabolic_rescale(traj, picks=avail) if traj.singular else []
    d = Path(out) / "rescaled"
    d.mkdir(parents=True, exist_ok=True)
    rows = []
    ok = True
    for e in entries:
        name = f"level_{e.j:02d}.csv"
        header, table = io.snapshot_table(e.imm, traj.band)
        io.write_table(d / name, header, table)
        passed = (e.normalization_residual <= NORMALIZATION_TOL
                  and e.history_max <= 1.0 + NORMALIZATION_TOL
                  and max(e.scaling_residuals.values()) <= SCALING_TOL)
        ok &= passed
        rows.append(dict(e.to_dict(), file=f"rescaled/{name}", **{"pass": passed}))
    report = {"scenario": traj.scenario_id, "levels_requested": levels,
              "levels_available": avail, "entries": rows, "all_pass": ok}
    path = Path(out) / "rescale.json"
    io.write_json(path, report)
    return path, ok


def run_pipeline(spec: ScenarioSpec | None, stages=STAGES, out=None, traj_dir=None, seed=None,
                 tolerance_profile="default", checks=None, levels=None) -> PipelineResult:
    """Run ``stages`` in order; returns the exit status and written artifacts.

    Without ``simulate`` a stored trajectory directory is required (``traj_dir``,
    or ``<out>/trajectory``).  Module errors propagate to the caller.
    """
    stages = [s for s in STAGES if s in stages]
    if spec is not None:
        spec = spec.with_seed(seed)
    if out is None:
        if spec is None:
            raise ValueError("an output directory is required without a scenario")
        out = default_out(spec)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    result = PipelineResult(EXIT_OK)
    if "simulate" in stages:
        if spec is None:
            raise ValueError("simulate needs a scenario")
        traj_dir = simulate(spec, out)
        result.artifacts["trajectory"] = str(traj_dir)
    if not any(s in stages for s in ("analyze", "verify", "rescale")):
        return result
    traj_dir = Path(traj_dir) if traj_dir is not None else out / "trajectory"
    traj = io.read_trajectory(traj_dir)
    if spec is None:
        stored = io.read_index(traj_dir).get("scenario")
        spec = ScenarioSpec.from_dict(stored).with_seed(seed) if stored else None
    if "analyze" in stages:
        result.artifacts["analysis"] = str(analyze(traj, spec, out))
    if "verify" in stages:
        path, ok = verify(traj, spec, out, checks, tolerance_profile, seed)
        result.artifacts["verification"] = str(path)
        if not ok:
            result.status = EXIT_CHECK_FAILED
            result.messages.append("verification: at least one check failed")
    if "rescale" in stages:
        J = levels if levels is not None else (spec.analysis["levels"] if spec else 6)
        path, ok = rescale(traj, J, out)
        result.artifacts["rescale"] = str(path)
        if not ok:
            result.status = EXIT_CHECK_FAILED
            result.messages.append("rescale: normalization or scaling law outside tolerance")
    return result


def collect_report(directory) -> dict:
    """Summary of the artifacts found in a pipeline output directory."""
    d = Path(directory)
    rep = {"directory": str(d)}
    found = False
    if (d / "analysis.json").is_file():
        a = io.read_json(d / "analysis.json")
        rep["analysis"] = {k: a.get(k) for k in ("scenario", "stop_reason", "final_time", "T_est",
                                                 "p_est", "C_est", "classification")}
        rep["analysis"]["verdicts"] = {q: g["verdict"] for q, g in a.get("growth", {}).items()}
        found = True
    if (d / "verification.json").is_file():
        v = io.read_json(d / "verification.json")
        rep["verification"] = dict(v["summary"], failed_ids=[r["check_id"] for r in v["records"]
                                                             if not r["pass"]])
        found = True
    if (d / "rescale.json").is_file():
        r = io.read_json(d / "rescale.json")
        rep["rescale"] = {"levels": r["levels_available"], "all_pass": r["all_pass"],
                          "max_normalization_residual": max(
                              (e["normalization_residual"] for e in r["entries"]), default=0.0)}
        found = True
    if (d / "trajectory" / "index.json").is_file():
        idx = io.read_index(d / "trajectory")
        rep["trajectory"] = {"scenario_id": idx["scenario_id"], "steps": idx.get("steps"),
                             "snapshots": len(idx["snapshots"]), "stop_reason": idx["stop_reason"]}
        found = True
    if not found:
        raise io.TrajectoryIOError(f"no pipeline artifacts in {d}")
    rep["all_pass"] = (rep.get("verification", {}).get("all_pass", True)
                       and rep.get("rescale", {}).get("all_pass", True))
    return rep
