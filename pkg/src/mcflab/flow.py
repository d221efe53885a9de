"""Explicit mean curvature flow dF/dt = H with curvature-adaptive steps.

Closed curves and rotational profiles are advanced by the compiled kernels
(``mcflab.kernels``); disc graphs use the generic tensor path with the
boundary held fixed.  Trajectories keep a full per-step diagnostic table and
a list of snapshots.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.interpolate import CubicSpline

from . import kernels
from .errors import FlowStalled, IncomparableSnapshots, StepRejected, Unsupported
from .geometry import (POLE_BAND, GeometryField, compute_geometry, contract_sq,
                       total_volume)
from .immersion import Kind, SampledImmersion, profile_spline

log = logging.getLogger(__name__)

MAX_HALVINGS = 20
DIAG_COLUMNS = kernels.DIAG_COLUMNS + ("I",)


class ReparamMode(str, Enum):
    OFF = "Off"
    ARC_LENGTH = "ArcLengthEveryK"
    CURVATURE = "CurvatureEveryK"


@dataclass(frozen=True)
class Reparametrize:
    """Redistribution of sample points along the submanifold every ``k`` steps.

    ``CURVATURE`` equidistributes the weight 1 + beta*|II| in arc length and
    applies to rotational profiles only.
    """

    mode: ReparamMode = ReparamMode.OFF
    k: int = 0
    beta: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "mode", ReparamMode(self.mode))
        if self.mode is not ReparamMode.OFF and self.k < 1:
            raise ValueError("redistribution interval k must be >= 1")

    @property
    def active(self):
        return self.mode is not ReparamMode.OFF


class StopReason(str, Enum):
    SINGULAR = "SingularStop"
    NON_SINGULAR = "NonSingularStop"


@dataclass
class FlowConfig:
    scenario_id: str
    initial: SampledImmersion
    dt_safety: float = 0.2
    stop_Q: float | None = None
    stop_factor: float = 200.0
    max_steps: int = 2_000_000
    snapshot_stride: int = 1000
    reparametrize: Reparametrize = field(default_factory=Reparametrize)
    level_snapshots: bool = True
    band: int = POLE_BAND

    def __post_init__(self):
        if not 0.0 < self.dt_safety <= 0.5:
            raise ValueError(f"dt_safety must lie in (0, 0.5], got {self.dt_safety}")
        q0 = initial_max_II(self.initial, self.band)
        if self.stop_Q is None:
            self.stop_Q = self.stop_factor * q0
        if not self.stop_Q > q0:
            raise ValueError(f"stop_Q = {self.stop_Q} must exceed the initial max|II| = {q0}")
        if self.snapshot_stride < 1 or self.max_steps < 1:
            raise ValueError("snapshot_stride and max_steps must be positive")
        if (self.reparametrize.mode is ReparamMode.CURVATURE
                and self.initial.kind is not Kind.ROTATIONAL_PROFILE):
            raise ValueError("curvature redistribution applies to rotational profiles only")
        if self.reparametrize.active and self.initial.kind is Kind.DISC_GRAPH:
            raise ValueError("disc graphs are never redistributed")


@dataclass
class Snapshot:
    t: float
    step: int
    imm: SampledImmersion
    reparam_count: int = 0
    level: int | None = None


@dataclass
class Trajectory:
    """Snapshots plus the per-step diagnostic table.

    ``diag`` has one row per step (state before the step) and a final row for
    the last state with dt = 0.  Column ``I`` accumulates the integral of
    max|dg/dt|_g (trapezoid rule).
    """

    scenario_id: str
    snapshots: list
    diag: np.ndarray
    stop_reason: StopReason
    Q0: float
    stop_Q: float
    band: int = POLE_BAND
    backend: str = kernels.BACKEND
    _geom: dict = field(default_factory=dict, repr=False)

    @property
    def times(self):
        return np.array([s.t for s in self.snapshots])

    @property
    def kind(self):
        return self.snapshots[0].imm.kind

    @property
    def m(self):
        return self.snapshots[0].imm.m

    def column(self, name):
        return self.diag[:, DIAG_COLUMNS.index(name)]

    def geometry(self, k) -> GeometryField:
        if k < 0:
            k += len(self.snapshots)
        if k not in self._geom:
            self._geom[k] = compute_geometry(self.snapshots[k].imm, self.band)
        return self._geom[k]

    def level_indices(self):
        """Snapshot index for each level j (first crossing of 2^j Q0)."""
        return {s.level: i for i, s in enumerate(self.snapshots) if s.level is not None}

    @property
    def singular(self):
        return self.stop_reason is StopReason.SINGULAR


def initial_max_II(imm: SampledImmersion, band: int = POLE_BAND) -> float:
    geom = compute_geometry(imm, band)
    return float(np.sqrt(geom.masked_max("norm_II_sq")))


# ---------------------------------------------------------------------------
# single steps


def mean_curvature_vector(imm: SampledImmersion, geom: GeometryField | None = None):
    """H as an array shaped like ``imm.positions``."""
    if imm.kind is Kind.CLOSED_CURVE:
        from ._pykernels import curve_velocity
        return curve_velocity(imm.positions, imm.spacing[0])[0]
    if imm.kind is Kind.ROTATIONAL_PROFILE:
        from ._pykernels import profile_velocity
        return profile_velocity(imm.positions, imm.spacing[0])[0]
    geom = geom or compute_geometry(imm)
    Hv = geom.H_vector()
    return _freeze_boundary(Hv)


def _freeze_boundary(arr):
    out = arr.copy()
    for ax in range(arr.ndim - 1):
        idx = [slice(None)] * arr.ndim
        for end in (0, -1):
            idx[ax] = end
            out[tuple(idx)] = 0.0
    return out


def _regular(imm: SampledImmersion) -> bool:
    try:
        compute_geometry(imm)
    except Exception:
        return False
    if imm.kind is Kind.ROTATIONAL_PROFILE and np.any(imm.positions[1:-1, 0] <= 0):
        return False
    return True


def step(imm: SampledImmersion, dt: float, geom: GeometryField | None = None):
    """One explicit Euler step F <- F + dt H.

    Returns the new immersion and the step actually taken.  If the result is
    degenerate the step is retried at dt/2, at most 20 times.

    Raises
    ------
    StepRejected
        When every halving still produces a degenerate immersion.
    """
    Hv = mean_curvature_vector(imm, geom)
    for _ in range(MAX_HALVINGS + 1):
        pos = imm.positions + dt * Hv
        if imm.kind is Kind.ROTATIONAL_PROFILE:
            pos[0, 0] = pos[-1, 0] = 0.0
        nxt = imm.with_positions(pos)
        if _regular(nxt):
            return nxt, dt
        dt *= 0.5
    raise StepRejected(f"step still degenerate after {MAX_HALVINGS} halvings")


def stable_step(imm: SampledImmersion, geom: GeometryField, dt_safety: float) -> float:
    """dt_safety * min(1 / max|II|^2, min g * h^2 / m) over all samples.

    For rotational profiles only the meridian direction is discretized, so
    g is the meridian entry g_uu, as in the compiled kernels.
    """
    max_II_sq = float(np.max(geom.norm_II_sq))
    if imm.kind is Kind.ROTATIONAL_PROFILE:
        gmin = float(np.min(geom.g[..., 0, 0]))
    else:
        gmin = float(np.min(np.linalg.eigvalsh(geom.g)))
    h = min(imm.spacing)
    return dt_safety * min(1.0 / max_II_sq, gmin * h * h / imm.m)


# ---------------------------------------------------------------------------
# redistribution


def _unwrap_labels(labels, period):
    jumps = np.concatenate([[0.0], np.cumsum(np.diff(labels) < 0)])
    return labels + period * jumps


def redistribute_curve(imm: SampledImmersion) -> SampledImmersion:
    """Resample a closed curve at equal arc length, carrying material labels."""
    pos = imm.positions
    N = pos.shape[0]
    closed = np.vstack([pos, pos[:1]])
    s = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(closed, axis=0), axis=1))])
    spl = CubicSpline(s, closed, axis=0, bc_type="periodic")
    period = imm.meta.get("period", N * imm.spacing[0])
    lab = _unwrap_labels(imm.labels, period)
    lab = np.concatenate([lab, [lab[0] + period]])
    lspl = CubicSpline(s, lab - s * period / s[-1], bc_type="periodic")
    target = s[-1] * np.arange(N) / N
    new_lab = (lspl(target) + target * period / s[-1]) % period
    return imm.with_positions(spl(target), labels=new_lab)


def redistribute_profile(imm: SampledImmersion, beta: float = 0.0,
                         curvature=None, oversample: int = 16) -> SampledImmersion:
    """Equidistribute a profile in the weight (1 + beta*|II|) ds, poles fixed."""
    u = imm.params[0]
    N = len(u)
    spl = profile_spline(imm)
    uf = np.linspace(u[0], u[-1], oversample * (N - 1) + 1)
    pf = spl(uf)
    ds = np.linalg.norm(np.diff(pf, axis=0), axis=1)
    w = np.ones_like(ds)
    if beta > 0.0:
        if curvature is None:
            from ._pykernels import profile_velocity
            _, _, k1, k2 = profile_velocity(imm.positions, imm.spacing[0])
            curvature = np.sqrt(k1 * k1 + k2 * k2)
        kap = np.asarray(curvature, dtype=float)
        for _ in range(3):
            kap = np.concatenate([[kap[0]], 0.25 * kap[:-2] + 0.5 * kap[1:-1] + 0.25 * kap[2:], [kap[-1]]])
        umid = 0.5 * (uf[1:] + uf[:-1])
        w = 1.0 + beta * np.interp(umid, u, kap)
    W = np.concatenate([[0.0], np.cumsum(w * ds)])
    u_new = np.interp(np.linspace(0.0, W[-1], N), W, uf)
    u_new[0], u_new[-1] = u[0], u[-1]
    pos = spl(u_new)
    pos[0, 0] = pos[-1, 0] = 0.0
    labels = CubicSpline(u, imm.labels)(u_new)
    labels[0], labels[-1] = imm.labels[0], imm.labels[-1]
    return imm.with_positions(pos, labels=labels)


def redistribute(imm: SampledImmersion, rep: Reparametrize) -> SampledImmersion:
    if imm.kind is Kind.CLOSED_CURVE:
        return redistribute_curve(imm)
    if imm.kind is Kind.ROTATIONAL_PROFILE:
        beta = rep.beta if rep.mode is ReparamMode.CURVATURE else 0.0
        return redistribute_profile(imm, beta)
    raise Unsupported("disc graphs are never redistributed")


def material_resample(imm: SampledImmersion, ref_labels) -> SampledImmersion:
    """Positions at the material labels ``ref_labels`` (spline in the label).

    Used to compare metrics of snapshots separated by redistributions: the
    result is parametrized like the reference snapshot, so the pulled-back
    metrics live on a common grid.
    """
    ref_labels = np.asarray(ref_labels, dtype=float)
    if imm.kind is Kind.CLOSED_CURVE:
        period = imm.meta.get("period", len(ref_labels) * imm.spacing[0])
        lab = _unwrap_labels(imm.labels, period)
        order_start = lab[0]
        lab_c = np.concatenate([lab, [lab[0] + period]])
        pos_c = np.vstack([imm.positions, imm.positions[:1]])
        spl = CubicSpline(lab_c, pos_c, axis=0, bc_type="periodic")
        q = (ref_labels - order_start) % period + order_start
        return SampledImmersion(imm.kind, imm.m, imm.n, (ref_labels,), spl(q),
                                imm.spacing, labels=ref_labels.copy(), meta=dict(imm.meta))
    if imm.kind is Kind.ROTATIONAL_PROFILE:
        relabel = SampledImmersion(imm.kind, 2, 1, (imm.labels,), imm.positions,
                                   (imm.spacing[0],), labels=imm.labels)
        # reflection ghosts need a uniform-ish knot spacing only for the ghosts
        spl = profile_spline(relabel)
        pos = spl(ref_labels)
        pos[0, 0] = pos[-1, 0] = 0.0
        return SampledImmersion(imm.kind, 2, 1, (ref_labels,), pos, imm.spacing,
                                labels=ref_labels.copy(), meta=dict(imm.meta))
    return imm


# ---------------------------------------------------------------------------
# driver


class _DiagBuffer:
    def __init__(self, rows=65536):
        self.data = np.zeros((rows, len(kernels.DIAG_COLUMNS)))

    def ensure(self, n):
        if n > self.data.shape[0]:
            new = np.zeros((max(n, 2 * self.data.shape[0]), self.data.shape[1]))
            new[: self.data.shape[0]] = self.data
            self.data = new


def _kernel_kind(imm):
    if imm.kind is Kind.CLOSED_CURVE:
        return kernels.CURVE
    if imm.kind is Kind.ROTATIONAL_PROFILE:
        return kernels.PROFILE
    return None


def _generic_row(imm, geom):
    mask = geom.norm_mask
    II = np.sqrt(geom.norm_II_sq)
    Hn = np.sqrt(geom.norm_H_sq)
    An = np.sqrt(geom.norm_A_sq)
    return (float(II[mask].max()), float(Hn[mask].max()), float(An[mask].max()),
            total_volume(imm, geom), float(2 * An.max()))


def state_row(imm: SampledImmersion, band: int = POLE_BAND):
    """Diagnostic values (max_II, max_H, max_A, volume, max_dtg) of one state."""
    kk = _kernel_kind(imm)
    if kk is None:
        return _generic_row(imm, compute_geometry(imm, band))
    return tuple(kernels.measure(kk, np.ascontiguousarray(imm.positions), imm.spacing[0],
                                 imm.m, band))


def run(config: FlowConfig) -> Trajectory:
    """Integrate until max|II| >= stop_Q (SingularStop) or max_steps (NonSingularStop).

    Snapshots are taken every ``snapshot_stride`` steps and, when
    ``level_snapshots`` is set, at the first state whose max|II| reaches
    2^j Q0 for j = 1, 2, ...  Redistributions happen right after the
    snapshot bookkeeping of a step count that is a multiple of k.

    Raises
    ------
    FlowStalled
        If a step cannot be made regular within 20 halvings.
    """
    imm = config.initial.copy()
    kk = _kernel_kind(imm)
    band = config.band
    Q0 = initial_max_II(imm, band)
    rep = config.reparametrize
    buf = _DiagBuffer()
    snaps = [Snapshot(0.0, 0, imm.copy(), 0, 0 if config.level_snapshots else None)]
    level = 1
    steps = 0
    t = 0.0
    reparams = 0
    stop = StopReason.NON_SINGULAR
    pos = np.ascontiguousarray(imm.positions)
    h = imm.spacing[0]
    while steps < config.max_steps:
        target = min(config.max_steps, (steps // config.snapshot_stride + 1) * config.snapshot_stride)
        if rep.active:
            target = min(target, (steps // rep.k + 1) * rep.k)
        level_q = Q0 * 2.0 ** level if config.level_snapshots else np.inf
        trigger = min(config.stop_Q, level_q)
        n_req = target - steps
        buf.ensure(steps + n_req + 1)
        if kk is not None:
            n_done, t, status = kernels.advance(kk, pos, h, config.dt_safety, imm.m, band,
                                                trigger, n_req, t, buf.data[steps:])
        else:
            n_done, t, status, imm = _advance_generic(imm, config, trigger, n_req, t,
                                                      buf.data[steps:])
        steps += n_done
        if status == kernels.STALLED:
            raise FlowStalled(f"step {steps} at t = {t:.6g} rejected after {MAX_HALVINGS} halvings")
        cur = _current(imm, pos, kk)
        if status == kernels.TRIGGERED:
            q = buf.data[steps, 2]
            if q >= config.stop_Q:
                stop = StopReason.SINGULAR
                _append(snaps, Snapshot(t, steps, cur, reparams, None))
                break
            while config.level_snapshots and q >= Q0 * 2.0 ** level:
                _append(snaps, Snapshot(t, steps, cur, reparams, level))
                level += 1
            continue
        if steps % config.snapshot_stride == 0 or steps == config.max_steps:
            _append(snaps, Snapshot(t, steps, cur, reparams, None))
        if rep.active and steps % rep.k == 0 and steps < config.max_steps:
            new = redistribute(cur, rep)
            reparams += 1
            pos[...] = new.positions
            imm.labels = new.labels
    # final row: state after the last step
    buf.ensure(steps + 1)
    final = _current(imm, pos, kk)
    buf.data[steps] = (t, 0.0) + tuple(state_row(final, band))
    if snaps[-1].step != steps:
        _append(snaps, Snapshot(t, steps, final, reparams, None))
    diag = buf.data[: steps + 1]
    dtg = diag[:, 6]
    I = np.concatenate([[0.0], np.cumsum(0.5 * diag[:-1, 1] * (dtg[:-1] + dtg[1:]))])
    traj = Trajectory(config.scenario_id, snaps, np.column_stack([diag, I]), stop, Q0,
                      float(config.stop_Q), band)
    log.info("%s: %s after %d steps, t = %.6g", config.scenario_id, stop.value, steps, t)
    return traj


def _current(imm, pos, kk):
    if kk is None:
        return imm.copy()
    return imm.with_positions(pos.copy(), labels=imm.labels.copy())


def _append(snaps, snap):
    if snaps and snaps[-1].step == snap.step:
        # same state: keep one snapshot, preferring the level tag
        if snap.level is not None and snaps[-1].level is None:
            snaps[-1] = snap
        elif snap.level is not None:
            snaps.append(snap)
        return
    snaps.append(snap)


def _advance_generic(imm, config, trigger, n_steps, t, diag):
    for k in range(n_steps):
        geom = compute_geometry(imm, config.band)
        row = _generic_row(imm, geom)
        if row[0] >= trigger:
            diag[k] = (t, 0.0) + row
            return k, t, kernels.TRIGGERED, imm
        dt = stable_step(imm, geom, config.dt_safety)
        try:
            imm, dt = step(imm, dt, geom)
        except StepRejected:
            return k, t, kernels.STALLED, imm
        diag[k] = (t, dt) + row
        t += dt
    return n_steps, t, kernels.RAN_ALL, imm


# ---------------------------------------------------------------------------
# evolution-equation consistency checks


@dataclass
class EvolutionResidual:
    """Residual of a discrete evolution identity between two snapshots.

    ``residual`` is in the units of the identity; ``normalized`` divides by
    ``scale`` (the size of the terms being balanced) so it can be compared
    with the truncation bound ``dt * max|II|^2 + (ds * max|II|)^2``.
    """

    name: str
    residual: float
    location: int
    dt: float
    spacing: float
    scale: float
    max_II: float
    extra: dict = field(default_factory=dict)

    @property
    def normalized(self):
        return self.residual / self.scale if self.scale > 0 else self.residual

    @property
    def truncation(self):
        return self.dt * self.max_II ** 2 + (self.spacing * self.max_II) ** 2

    def within_contract(self, factor=10.0):
        return self.normalized <= factor * self.truncation


def single_step_trajectory(imm: SampledImmersion, dt: float, scenario_id="single-step",
                           band: int = POLE_BAND) -> Trajectory:
    """Two-snapshot trajectory made of exactly one Euler step of size dt."""
    nxt, dt_used = step(imm, dt)
    rows = np.array([(0.0, dt_used) + tuple(state_row(imm, band)),
                     (dt_used, 0.0) + tuple(state_row(nxt, band))])
    I = np.array([0.0, 0.5 * dt_used * (rows[0, 6] + rows[1, 6])])
    q0 = rows[0, 2]
    return Trajectory(scenario_id, [Snapshot(0.0, 0, imm.copy()), Snapshot(dt_used, 1, nxt)],
                      np.column_stack([rows, I]), StopReason.NON_SINGULAR, q0, np.inf, band)


def _pair(traj: Trajectory, k: int):
    a, b = traj.snapshots[k], traj.snapshots[k + 1]
    if a.reparam_count != b.reparam_count:
        raise IncomparableSnapshots(
            f"snapshots {k} and {k + 1} are separated by a redistribution")
    return a, b, traj.geometry(k), traj.geometry(k + 1), b.t - a.t


def _phys_spacing(imm, geom):
    return float(max(imm.spacing) * np.sqrt(np.max(np.linalg.eigvalsh(geom.g))))


def check_metric_evolution(traj: Trajectory, k: int = 0) -> EvolutionResidual:
    """max_p |(g(t+dt) - g(t))/dt + 2A(t)|_g(t) over non-pole samples."""
    a, b, g0, g1, dt = _pair(traj, k)
    R = (g1.g - g0.g) / dt + 2.0 * g0.A
    res = np.sqrt(np.abs(contract_sq(R, g0.g_inv)))
    res = np.where(g0.norm_mask, res, 0.0)
    idx = int(np.argmax(res))
    An = np.sqrt(g0.norm_A_sq)
    return EvolutionResidual("metric", float(res.ravel()[idx]), idx, dt,
                             _phys_spacing(a.imm, g0), float(An[g0.norm_mask].max()),
                             float(np.sqrt(g0.masked_max("norm_II_sq"))))


def check_volume_evolution(traj: Trajectory, k: int = 0) -> EvolutionResidual:
    """max_p |(log dvol(t+dt) - log dvol(t))/dt + |H|^2(t)|.

    The logarithmic difference quotient agrees with the relative one to first
    order and keeps the O(dt) Euler truncation visible when the step is
    exactly linear in dvol (a regular polygon shrinks linearly).

    ``extra`` carries the total volume rate and whether the total volume
    decreased over the step.
    """
    a, b, g0, g1, dt = _pair(traj, k)
    R = np.log(g1.vol_density / g0.vol_density) / dt + g0.norm_H_sq
    R = np.where(g0.norm_mask, np.abs(R), 0.0)
    idx = int(np.argmax(R))
    V0 = total_volume(a.imm, g0)
    V1 = total_volume(b.imm, g1)
    extra = {"volume_rate": (V1 - V0) / dt, "volume_before": V0, "volume_after": V1,
             "volume_nonincreasing": bool(V1 <= V0 * (1 + 1e-14))}
    return EvolutionResidual("volume", float(R.ravel()[idx]), idx, dt, _phys_spacing(a.imm, g0),
                             float(g0.norm_H_sq[g0.norm_mask].max()),
                             float(np.sqrt(g0.masked_max("norm_II_sq"))), extra)


def signed_curvature(pos, h):
    """Signed curvature of a closed plane curve and its arc-length Laplacian."""
    fp = np.roll(pos, -1, axis=0)
    fm = np.roll(pos, 1, axis=0)
    Fu = (fp - fm) / (2 * h)
    Fuu = (fp - 2 * pos + fm) / (h * h)
    speed = np.hypot(Fu[:, 0], Fu[:, 1])
    kappa = (Fu[:, 0] * Fuu[:, 1] - Fu[:, 1] * Fuu[:, 0]) / speed ** 3
    k_u = (np.roll(kappa, -1) - np.roll(kappa, 1)) / (2 * h)
    k_uu = (np.roll(kappa, -1) - 2 * kappa + np.roll(kappa, 1)) / (h * h)
    s_u = (np.roll(speed, -1) - np.roll(speed, 1)) / (2 * h)
    k_ss = (k_uu - k_u * s_u / speed) / speed ** 2
    return kappa, k_ss


def check_curvature_evolution_curve(traj: Trajectory, k: int = 0) -> EvolutionResidual:
    """max_p |d kappa/dt - kappa_ss - kappa^3| for closed plane curves."""
    imm0 = traj.snapshots[k].imm
    if imm0.kind is not Kind.CLOSED_CURVE or imm0.n != 1:
        raise Unsupported("curvature evolution is checked for closed plane curves only")
    a, b, g0, g1, dt = _pair(traj, k)
    h = imm0.spacing[0]
    k0, kss = signed_curvature(a.imm.positions, h)
    k1, _ = signed_curvature(b.imm.positions, h)
    R = np.abs((k1 - k0) / dt - kss - k0 ** 3)
    idx = int(np.argmax(R))
    return EvolutionResidual("curvature", float(R[idx]), idx, dt, _phys_spacing(a.imm, g0),
                             float(np.max(np.abs(k0)) ** 3), float(np.max(np.abs(k0))))
