"""Singular-time fits, type classification, blow-up monitors and rescaling."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import BadAnchor, FitDiverged, InsufficientData
from .flow import Trajectory, material_resample
from .geometry import compute_geometry, total_volume
from .immersion import Kind, SampledImmersion
from .records import CheckRecord

MIN_DECADE_POINTS = 20
MAX_RMS = 0.1
TYPE_I_TAU = 0.15
NORMALIZATION_TOL = 1e-6
SCALING_TOL = 1e-10

_COLUMN = {"II": "max_II", "H": "max_H", "A": "max_A"}


class Quantity(str, Enum):
    II = "II"
    H = "H"
    A = "A"


@dataclass
class BlowupFit:
    quantity: Quantity
    T_est: float
    p_est: float
    C_est: float
    fit_window: tuple
    residual_rms: float
    slope: float
    n_points: int

    def to_dict(self):
        return {"quantity": self.quantity.value, "T_est": self.T_est, "p_est": self.p_est,
                "C_est": self.C_est, "fit_window": list(self.fit_window),
                "residual_rms": self.residual_rms, "exponent": self.slope,
                "n_points": self.n_points}


def _linear_rms(x, y):
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    r = y - A @ coef
    return float(np.sqrt(np.mean(r * r))), coef


def _golden(f, a, b, iters=80):
    phi = (np.sqrt(5.0) - 1.0) / 2.0
    c = b - phi * (b - a)
    d = a + phi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - phi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + phi * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def fit_window(t, q, factor=10.0):
    """Trailing run of samples with q >= factor * q[0]."""
    below = np.flatnonzero(q < factor * q[0])
    start = below[-1] + 1 if len(below) else 0
    return start


def fit_blowup(t, q, quantity=Quantity.II, window_factor=10.0) -> BlowupFit:
    """Fit log q = -(1/p) log(T - t) + c over the trailing window.

    T is found by golden-section search on log(T - t_end) minimizing the RMS
    residual of the linear fit; the search bracket is refined from a coarse
    scan so that a single minimum is bracketed.

    Raises
    ------
    InsufficientData
        Fewer than 20 samples in the last decade of growth, or an empty window.
    FitDiverged
        Residual RMS above 0.1 or a non-growing fit.
    """
    t = np.asarray(t, dtype=float)
    q = np.asarray(q, dtype=float)
    quantity = Quantity(quantity)
    if len(q) < 2 or q[-1] <= 0:
        raise InsufficientData("empty series")
    last_decade = int(np.sum(q >= q[-1] / 10.0))
    if last_decade < MIN_DECADE_POINTS:
        raise InsufficientData(
            f"{last_decade} samples in the last decade of growth, need {MIN_DECADE_POINTS}")
    start = fit_window(t, q, window_factor)
    tw, qw = t[start:], q[start:]
    if len(tw) < MIN_DECADE_POINTS or tw[-1] <= tw[0]:
        raise InsufficientData("fit window too short")
    y = np.log(qw)
    span = tw[-1] - tw[0]
    t_end = tw[-1]

    def objective(x):
        return _linear_rms(np.log(t_end + np.exp(x) - tw), y)[0]

    lo, hi = np.log(span * 1e-9), np.log(span * 10.0)
    grid = np.linspace(lo, hi, 91)
    vals = np.array([objective(x) for x in grid])
    k = int(np.argmin(vals))
    a, b = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    x = _golden(objective, a, b)
    T = t_end + np.exp(x)
    rms, (slope, _) = _linear_rms(np.log(T - tw), y)
    if not np.isfinite(rms) or rms > MAX_RMS:
        raise FitDiverged(f"fit residual rms {rms:.3g} exceeds {MAX_RMS}")
    if slope >= 0:
        raise FitDiverged(f"quantity does not grow toward T (slope {slope:.3g})")
    p = -1.0 / slope
    C = float(np.max(qw ** p * (T - tw)))
    return BlowupFit(quantity, float(T), float(p), C, (float(tw[0]), float(tw[-1])),
                     float(rms), float(slope), int(len(tw)))


def estimate_singular_time(traj: Trajectory, quantity=Quantity.II) -> BlowupFit:
    if not traj.singular:
        raise InsufficientData("trajectory did not end in SingularStop")
    quantity = Quantity(quantity)
    return fit_blowup(traj.column("t"), traj.column(_COLUMN[quantity.value]), quantity)


class BlowupType(str, Enum):
    TYPE_I = "TypeI"
    GENERALIZED_RATE = "GeneralizedRate"
    SUPER_TYPE_I = "SuperTypeI"
    UNCLASSIFIED = "Unclassified"


@dataclass(frozen=True)
class Classification:
    kind: BlowupType
    p: float

    def __str__(self):
        if self.kind is BlowupType.GENERALIZED_RATE:
            return f"GeneralizedRate({self.p:.3g})"
        return self.kind.value


def classify_type(fit: BlowupFit, tau: float = TYPE_I_TAU) -> Classification:
    """TypeI for |p - 2| <= tau, GeneralizedRate for 1 < p < 2 - tau, SuperTypeI above 2 + tau.

    Exponents p <= 1 fall outside every class of the rate hypothesis and are
    reported as Unclassified.
    """
    p = fit.p_est
    if abs(p - 2.0) <= tau:
        return Classification(BlowupType.TYPE_I, p)
    if p > 2.0 + tau:
        return Classification(BlowupType.SUPER_TYPE_I, p)
    if p > 1.0:
        return Classification(BlowupType.GENERALIZED_RATE, p)
    return Classification(BlowupType.UNCLASSIFIED, p)


class Verdict(str, Enum):
    BLOWUP = "Blowup"
    NO_BLOWUP = "NoBlowup"
    NO_VERDICT = "NoVerdict"


@dataclass
class MonitorEntry:
    quantity: Quantity
    verdict: Verdict
    window_growth: float
    decade_growth: float
    exponent: float
    fit: BlowupFit | None
    note: str = ""

    def to_dict(self):
        return {"quantity": self.quantity.value, "verdict": self.verdict.value,
                "window_growth": self.window_growth, "decade_growth": self.decade_growth,
                "exponent": self.exponent, "note": self.note,
                "fit": None if self.fit is None else self.fit.to_dict()}


def decade_growth(t, q, T):
    """q(t_end) / q(t*) where T - t* = 10 (T - t_end).

    q(t*) is interpolated linearly in log q against log(T - t), which is exact
    for a power law.
    """
    t_star = T - 10.0 * (T - t[-1])
    if t_star < t[0] or not T > t[-1]:
        return float("nan")
    x = np.log(T - np.asarray(t, dtype=float))[::-1]
    y = np.log(np.asarray(q, dtype=float))[::-1]
    return float(q[-1] / np.exp(np.interp(np.log(T - t_star), x, y)))


def blowup_monitor(traj: Trajectory) -> dict:
    """Per-quantity blow-up verdicts for max|II|, max|H| and max|A|.

    A quantity is declared Blowup when, over its fit window (the trailing
    samples above ten times the initial value), it grew at least tenfold, the
    power-law fit has residual below 0.1 and a positive exponent.  The growth
    over the final decade of T_est - t is reported alongside.
    """
    out = {}
    for qty in Quantity:
        if not traj.singular:
            out[qty.value] = MonitorEntry(qty, Verdict.NO_VERDICT, float("nan"), float("nan"),
                                          float("nan"), None, "trajectory not singular")
            continue
        t = traj.column("t")
        q = traj.column(_COLUMN[qty.value])
        try:
            fit = fit_blowup(t, q, qty)
        except (InsufficientData, FitDiverged) as exc:
            start = fit_window(t, q)
            growth = float(q[-1] / q[start]) if start < len(q) else float("nan")
            out[qty.value] = MonitorEntry(qty, Verdict.NO_BLOWUP, growth, float("nan"),
                                          float("nan"), None, str(exc))
            continue
        start = fit_window(t, q)
        growth = float(q[-1] / q[start])
        verdict = Verdict.BLOWUP if (growth >= 10.0 and fit.residual_rms < MAX_RMS
                                     and fit.slope < 0) else Verdict.NO_BLOWUP
        out[qty.value] = MonitorEntry(qty, verdict, growth, decade_growth(t, q, fit.T_est),
                                      fit.slope, fit)
    return out


# ---------------------------------------------------------------------------
# parabolic rescaling


@dataclass
class RescaleEntry:
    j: int
    snapshot: int
    t_j: float
    p_j: int
    Q_j: float
    imm: SampledImmersion
    II_anchor: float
    H_ratio_residual: float
    history_max: float
    scaling_residuals: dict
    time_scale: float

    @property
    def normalization_residual(self):
        return abs(self.II_anchor - 1.0)

    def to_dict(self):
        return {"j": self.j, "snapshot": self.snapshot, "t_j": self.t_j, "p_j": self.p_j,
                "Q_j": self.Q_j, "II_anchor": self.II_anchor,
                "normalization_residual": self.normalization_residual,
                "H_ratio_residual": self.H_ratio_residual,
                "rescaled_history_max": self.history_max,
                "scaling_residuals": self.scaling_residuals}


def rescale_immersion(imm: SampledImmersion, Q: float, anchor: int) -> SampledImmersion:
    """Scale positions by Q about F(anchor); profiles are recentred on the axis."""
    pos = imm.positions
    if imm.kind is Kind.ROTATIONAL_PROFILE:
        centre = np.array([0.0, pos[anchor, 1]])
    else:
        centre = pos.reshape(-1, pos.shape[-1])[anchor]
    new = imm.with_positions(Q * (pos - centre))
    new.meta = dict(imm.meta, rescale_factor=Q)
    return new


def _rel(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    scale = np.maximum(np.abs(b), np.finfo(float).tiny)
    return float(np.max(np.abs(a - b) / scale))


def scaling_residuals(imm, geom, rimm, rgeom, Q):
    """Max relative deviation from the scaling laws under x -> Q x."""
    m = imm.m
    mask = geom.norm_mask
    res = {
        "II": _rel(np.sqrt(rgeom.norm_II_sq[mask]), np.sqrt(geom.norm_II_sq[mask]) / Q),
        "H": _rel(np.sqrt(rgeom.norm_H_sq[mask]), np.sqrt(geom.norm_H_sq[mask]) / Q),
        "A": _rel(np.sqrt(rgeom.norm_A_sq[mask]), np.sqrt(geom.norm_A_sq[mask]) / Q ** 2),
        "volume": _rel(total_volume(rimm, rgeom), Q ** m * total_volume(imm, geom)),
    }
    # R can vanish identically (curves); compare against the curvature scale
    Rscale = np.maximum(np.abs(geom.scalar_R[mask]), geom.norm_II_sq[mask])
    res["R"] = float(np.max(np.abs(rgeom.scalar_R[mask] * Q ** 2 - geom.scalar_R[mask]) / Rscale))
    return res


def parabolic_rescale(traj: Trajectory, levels=6, picks=None) -> list:
    """Rescale the level snapshots j = 1..levels (first crossings of 2^j Q0).

    Raises
    ------
    InsufficientData
        If a requested level was never reached.
    BadAnchor
        If |II(p_j, t_j)| < 0.99 * max_{t <= t_j} max|II|.
    """
    idx = traj.level_indices()
    picks = list(range(1, levels + 1)) if picks is None else list(picks)
    II_col = traj.column("max_II")
    out = []
    for j in picks:
        if j not in idx:
            raise InsufficientData(f"level {j} (max|II| = 2^{j} Q0) not reached")
        k = idx[j]
        snap = traj.snapshots[k]
        geom = traj.geometry(k)
        p = geom.argmax("norm_II_sq")
        Q = float(np.sqrt(geom.norm_II_sq.ravel()[p]))
        hist = float(np.max(II_col[: snap.step + 1]))
        if Q < 0.99 * hist:
            raise BadAnchor(f"level {j}: |II(p_j)| = {Q:.6g} below 0.99 * history max {hist:.6g}")
        rimm = rescale_immersion(snap.imm, Q, p)
        rgeom = compute_geometry(rimm, traj.band)
        II_anchor = float(np.sqrt(rgeom.norm_II_sq.ravel()[p]))
        H_ratio = _rel(np.sqrt(rgeom.norm_H_sq.ravel()[p]), np.sqrt(geom.norm_H_sq.ravel()[p]) / Q)
        res = scaling_residuals(snap.imm, geom, rimm, rgeom, Q)
        out.append(RescaleEntry(j, k, snap.t, p, Q, rimm, II_anchor, H_ratio, hist / Q, res,
                                Q * Q))
    return out


def rescaled_history(traj: Trajectory, entry: RescaleEntry):
    """(t, max|II|) of the rescaled flow for t <= 0."""
    t = traj.column("t")
    q = traj.column("max_II")
    n = traj.snapshots[entry.snapshot].step + 1
    return (t[:n] - entry.t_j) * entry.Q_j ** 2, q[:n] / entry.Q_j


# ---------------------------------------------------------------------------
# displacement


def displacement_bound_check(traj: Trajectory, tolerance: float = 1e-10) -> CheckRecord:
    """max_p |F(p,t) - F(p,0)| <= (sup_{s<=t} max|H|) t at every snapshot.

    Snapshots taken after a redistribution are first resampled at the
    material labels of the initial snapshot.  Displacements are measured on
    the samples that enter max|H| (the disc for graphs, off the pole band for
    profiles).
    """
    s0 = traj.snapshots[0]
    base = s0.imm.ambient_positions()
    mask = traj.geometry(0).norm_mask.ravel()
    t_col = traj.column("t")
    H_run = np.maximum.accumulate(traj.column("max_H"))
    worst = (np.inf, 0, 0)
    rows = []
    for k, snap in enumerate(traj.snapshots[1:], start=1):
        imm = snap.imm
        if snap.reparam_count != s0.reparam_count:
            imm = material_resample(imm, s0.imm.labels)
        disp = np.where(mask, np.linalg.norm(imm.ambient_positions() - base, axis=-1).ravel(), 0.0)
        i = int(np.argmax(disp))
        bound = float(H_run[min(snap.step, len(t_col) - 1)] * snap.t)
        margin = bound - float(disp[i])
        rows.append((snap.t, float(disp[i]), bound))
        if margin < worst[0]:
            worst = (margin, k, i)
    scale = max(1.0, float(np.max(np.abs(base))))
    return CheckRecord("displacement_bound", traj.scenario_id, float(worst[0]),
                       {"snapshot": worst[1], "sample": worst[2]}, tolerance * scale,
                       units="length", details={"series": rows[-5:]})


def analysis_report(traj: Trajectory, levels=6) -> dict:
    """JSON-ready analysis: fits, classification, growth table, normalization residuals."""
    report = {"scenario": traj.scenario_id, "stop_reason": traj.stop_reason.value,
              "final_time": float(traj.times[-1]), "steps": int(traj.diag.shape[0] - 1)}
    fits = {}
    for qty in Quantity:
        try:
            fits[qty.value] = estimate_singular_time(traj, qty).to_dict()
        except (InsufficientData, FitDiverged) as exc:
            fits[qty.value] = {"error": f"{type(exc).__name__}: {exc}"}
    report["fits"] = fits
    main = fits["II"]
    if "p_est" in main:
        report["T_est"] = main["T_est"]
        report["p_est"] = main["p_est"]
        report["C_est"] = main["C_est"]
        p = main["p_est"]
        report["classification"] = str(classify_type(BlowupFit(Quantity.II, main["T_est"], p,
                                                               main["C_est"], (0, 0), 0, 0, 0)))
    report["growth"] = {k: v.to_dict() for k, v in blowup_monitor(traj).items()}
    if traj.singular:
        avail = sorted(j for j in traj.level_indices() if j >= 1)
        try:
            entries = parabolic_rescale(traj, picks=[j for j in avail if j <= levels])
            report["rescale"] = [e.to_dict() for e in entries]
        except (InsufficientData, BadAnchor) as exc:
            report["rescale"] = {"error": f"{type(exc).__name__}: {exc}"}
    return report
