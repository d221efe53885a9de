"""Trajectory directories and JSON reports.

A trajectory directory holds ``index.json`` (run metadata, snapshot table),
``diagnostics.csv`` (one row per step) and one ``snapshot_KKKKK.csv`` per
snapshot.  All floats are written with 17 significant digits so a
round trip reproduces them exactly.
"""
from __future__ import annotations

import csv
import json
import math
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import DegenerateMetric, TrajectoryIOError
from .flow import DIAG_COLUMNS, Snapshot, StopReason, Trajectory
from .geometry import compute_geometry
from .immersion import Kind, SampledImmersion

INDEX_SCHEMA = 1
FLOAT_FMT = "%.17g"


# ---------------------------------------------------------------------------
# JSON


def to_jsonable(obj):
    """Plain-JSON view: numpy scalars/arrays unwrapped, non-finite floats as strings."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if obj is None or isinstance(obj, str):
        return obj
    if hasattr(obj, "to_dict"):
        return to_jsonable(obj.to_dict())
    return str(obj)


def dumps(obj) -> str:
    return json.dumps(to_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path, obj):
    Path(path).write_text(dumps(obj))


def read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise TrajectoryIOError(f"cannot read {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# snapshots


def _param_columns(imm: SampledImmersion):
    if len(imm.params) == 1:
        return ["u"], imm.params[0][:, None]
    grids = np.meshgrid(*imm.params, indexing="ij")
    return ["u", "v"], np.stack([g.ravel() for g in grids], -1)


def _position_names(imm):
    if imm.kind is Kind.ROTATIONAL_PROFILE:
        return ["rho", "z"]
    return [f"x{i}" for i in range(imm.coord_dim)]


def snapshot_table(imm: SampledImmersion, band: int):
    """Header and rows (param, label, positions, |II|^2, |H|^2, |A|^2, R)."""
    names, params = _param_columns(imm)
    S = imm.num_samples
    try:
        geom = compute_geometry(imm, band)
        curv = [getattr(geom, f).reshape(S, 1)
                for f in ("norm_II_sq", "norm_H_sq", "norm_A_sq", "scalar_R")]
    except DegenerateMetric:
        # states past the regularity threshold keep positions only
        curv = [np.full((S, 1), np.nan)] * 4
    labels = imm.labels if imm.labels is not None else np.full(imm.grid_shape, np.nan)
    cols = [params, labels.reshape(S, 1), imm.positions.reshape(S, -1)] + curv
    header = names + ["label"] + _position_names(imm) + ["II_sq", "H_sq", "A_sq", "R"]
    return header, np.hstack(cols)


def write_table(path, header, rows):
    np.savetxt(path, rows, delimiter=",", header=",".join(header), comments="", fmt=FLOAT_FMT)


def read_table(path):
    try:
        with open(path, newline="") as fh:
            header = next(csv.reader(fh))
        rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, StopIteration, ValueError) as exc:
        raise TrajectoryIOError(f"cannot read table {path}: {exc}") from exc
    if rows.shape[1] != len(header):
        raise TrajectoryIOError(f"{path}: {rows.shape[1]} columns but {len(header)} names")
    return header, rows


def _immersion_meta(imm: SampledImmersion):
    return {"kind": imm.kind.value, "m": imm.m, "n": imm.n,
            "spacing": list(imm.spacing), "grid_shape": list(imm.grid_shape),
            "meta": imm.meta}


def _rebuild(info, header, rows) -> SampledImmersion:
    kind = Kind(info["kind"])
    m = info["m"]
    shape = tuple(info["grid_shape"])
    pnames = ["u"] if len(shape) == 1 else ["u", "v"]
    if header[:len(pnames)] != pnames:
        raise TrajectoryIOError("snapshot parameter columns do not match the index")
    if kind is Kind.ROTATIONAL_PROFILE:
        pos_names = ["rho", "z"]
    else:
        pos_names = [f"x{i}" for i in range(m + info["n"])]
    try:
        pos_idx = [header.index(c) for c in pos_names]
        lab_idx = header.index("label")
    except ValueError as exc:
        raise TrajectoryIOError(f"snapshot missing column: {exc}") from exc
    if rows.shape[0] != int(np.prod(shape)):
        raise TrajectoryIOError(f"snapshot has {rows.shape[0]} rows, index says {shape}")
    if len(shape) == 1:
        params = (rows[:, 0].copy(),)
    else:
        params = (rows[:: shape[1], 0].copy(), rows[: shape[1], 1].copy())
    positions = rows[:, pos_idx].reshape(shape + (len(pos_names),))
    labels = rows[:, lab_idx].reshape(shape)
    labels = None if np.all(np.isnan(labels)) else labels
    return SampledImmersion(kind, m, info["n"], params, positions, tuple(info["spacing"]),
                            labels=labels, meta=info.get("meta", {}))


# ---------------------------------------------------------------------------
# trajectories


def write_trajectory(traj: Trajectory, directory, scenario: dict | None = None) -> Path:
    """Write ``traj`` to ``directory`` (created if needed); returns the index path."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_table(d / "diagnostics.csv", list(DIAG_COLUMNS), traj.diag)
    snaps = []
    for k, s in enumerate(traj.snapshots):
        name = f"snapshot_{k:05d}.csv"
        header, rows = snapshot_table(s.imm, traj.band)
        write_table(d / name, header, rows)
        snaps.append({"file": name, "t": s.t, "step": s.step, "reparam_count": s.reparam_count,
                      "level": s.level})
    index = {"schema": INDEX_SCHEMA, "scenario_id": traj.scenario_id,
             "stop_reason": traj.stop_reason.value, "Q0": traj.Q0, "stop_Q": traj.stop_Q,
             "band": traj.band, "backend": traj.backend, "steps": int(traj.diag.shape[0] - 1),
             "diagnostics": {"file": "diagnostics.csv", "columns": list(DIAG_COLUMNS)},
             "immersion": _immersion_meta(traj.snapshots[0].imm), "snapshots": snaps,
             "scenario": scenario}
    path = d / "index.json"
    write_json(path, index)
    return path


def read_index(directory) -> dict:
    d = Path(directory)
    path = d / "index.json"
    if not path.is_file():
        raise TrajectoryIOError(f"no trajectory index at {path}")
    index = read_json(path)
    if not isinstance(index, dict):
        raise TrajectoryIOError(f"{path}: index must be a JSON object")
    missing = [k for k in ("schema", "scenario_id", "stop_reason", "Q0", "stop_Q", "immersion",
                           "snapshots", "diagnostics") if k not in index]
    if missing:
        raise TrajectoryIOError(f"{path}: index is missing {missing}")
    if index["schema"] != INDEX_SCHEMA:
        raise TrajectoryIOError(f"{path}: unsupported index schema {index['schema']!r}")
    return index


def read_trajectory(directory) -> Trajectory:
    """Rebuild a Trajectory written by :func:`write_trajectory`.

    Raises
    ------
    TrajectoryIOError
        Missing or malformed index, diagnostics or snapshot files.
    """
    d = Path(directory)
    index = read_index(d)
    try:
        info = index["immersion"]
        header, diag = read_table(d / index["diagnostics"]["file"])
        if tuple(header) != DIAG_COLUMNS:
            raise TrajectoryIOError(f"diagnostics columns {header} != {list(DIAG_COLUMNS)}")
        snaps = []
        for s in index["snapshots"]:
            h, rows = read_table(d / s["file"])
            snaps.append(Snapshot(float(s["t"]), int(s["step"]), _rebuild(info, h, rows),
                                  int(s["reparam_count"]), s["level"]))
        stop = StopReason(index["stop_reason"])
        stop_Q = index["stop_Q"]
        stop_Q = float("inf") if stop_Q == "inf" else float(stop_Q)
    except (KeyError, TypeError, ValueError) as exc:
        raise TrajectoryIOError(f"{d}: malformed trajectory ({type(exc).__name__}: {exc})") from exc
    if not snaps:
        raise TrajectoryIOError(f"{d}: trajectory has no snapshots")
    return Trajectory(index["scenario_id"], snaps, diag, stop, float(index["Q0"]), stop_Q,
                      int(index.get("band", 2)), index.get("backend", "unknown"))
