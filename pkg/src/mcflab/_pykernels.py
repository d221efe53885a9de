"""Numpy implementation of the explicit flow kernels.

Mirrors ``_ckernels.pyx`` exactly (same stencils, same step control, same
diagnostic columns) and is used when the compiled module is unavailable.
"""
import numpy as np

CURVE = 0
PROFILE = 1

RAN_ALL = 0
TRIGGERED = 1
STALLED = 2

DIAG_COLUMNS = ("t", "dt", "max_II", "max_H", "max_A", "volume", "max_dtg")
MAX_HALVINGS = 20
TOL_SPEED_SQ = 1e-12


def curve_velocity(pos, h):
    """Mean curvature vector of a closed curve and per-sample scalars.

    Returns (Hvec, g, norm_H) with g = |F_u|^2.
    """
    fp = np.roll(pos, -1, axis=0)
    fm = np.roll(pos, 1, axis=0)
    Fu = (fp - fm) / (2 * h)
    Fuu = (fp - 2 * pos + fm) / (h * h)
    g = np.einsum("id,id->i", Fu, Fu)
    Hvec = (Fuu - (np.einsum("id,id->i", Fuu, Fu) / g)[:, None] * Fu) / g[:, None]
    return Hvec, g, np.sqrt(np.einsum("id,id->i", Hvec, Hvec))


def profile_velocity(pos, h):
    """Mean curvature vector (rho, z components) of a surface of revolution.

    Returns (Hvec, E, k1, k2) with E = |F_u|^2 and principal curvatures with
    respect to the inward normal nu = (z_u, -rho_u) / |F_u|.
    """
    N = pos.shape[0]
    ext = np.empty((N + 2, 2))
    ext[1:-1] = pos
    ext[0] = (-pos[1, 0], pos[1, 1])
    ext[-1] = (-pos[-2, 0], pos[-2, 1])
    Fu = (ext[2:] - ext[:-2]) / (2 * h)
    Fuu = (ext[2:] - 2 * pos + ext[:-2]) / (h * h)
    E = Fu[:, 0] ** 2 + Fu[:, 1] ** 2
    s = np.sqrt(E)
    nr = Fu[:, 1] / s
    nz = -Fu[:, 0] / s
    k1 = (Fuu[:, 0] * nr + Fuu[:, 1] * nz) / E
    k2 = np.empty(N)
    k2[1:-1] = -nr[1:-1] / pos[1:-1, 0]
    k2[0] = k1[0]
    k2[-1] = k1[-1]
    Hs = k1 + k2
    Hvec = np.stack([Hs * nr, Hs * nz], axis=-1)
    return Hvec, E, k1, k2


def _diagnostics(kind, pos, h, m, band):
    """(Hvec, metric scale min_g, max_II over all, row of masked maxima)."""
    if kind == CURVE:
        Hvec, g, normH = curve_velocity(pos, h)
        II = normH
        Hn = normH
        A = normH * normH
        volume = h * np.sum(np.sqrt(g))
        gmin = g.min()
        sel = slice(None)
    else:
        Hvec, g, k1, k2 = profile_velocity(pos, h)
        II = np.sqrt(k1 * k1 + k2 * k2)
        Hn = np.abs(k1 + k2)
        A = Hn * II
        volume = 2 * np.pi * h * np.sum(pos[:, 0] * np.sqrt(g))
        gmin = g.min()
        sel = slice(band, pos.shape[0] - band)
    row = (float(II[sel].max()), float(Hn[sel].max()), float(A[sel].max()),
           float(volume), float(2 * A.max()))
    return Hvec, gmin, float(II.max()), row


def _acceptable(kind, pos, h):
    if kind == CURVE:
        d = np.roll(pos, -1, axis=0) - np.roll(pos, 1, axis=0)
        return np.min(np.einsum("id,id->i", d, d)) / (4 * h * h) > TOL_SPEED_SQ
    if np.any(pos[1:-1, 0] <= 0.0):
        return False
    d = pos[2:] - pos[:-2]
    return np.min(np.einsum("id,id->i", d, d)) / (4 * h * h) > TOL_SPEED_SQ


def measure(kind, pos, h, m, band):
    """Diagnostic row (max_II, max_H, max_A, volume, max_dtg) of a state."""
    return _diagnostics(kind, pos, h, m, band)[3]


def stable_dt(dt_safety, max_II_all, gmin, h, m):
    return dt_safety * min(1.0 / (max_II_all * max_II_all), gmin * h * h / m)


def advance(kind, pos, h, dt_safety, m, band, q_trigger, n_steps, t0, diag):
    """Take up to ``n_steps`` explicit Euler steps of dF/dt = H in place.

    Parameters
    ----------
    kind : int
        ``CURVE`` or ``PROFILE``.
    pos : ndarray, shape (N, d)
        Positions, overwritten.
    diag : ndarray, shape (>= n_steps, 7)
        One row per step taken, columns ``DIAG_COLUMNS`` evaluated before the
        step.  When the trigger fires, the row of the current state is written
        in slot ``n_done`` with dt = 0.

    Returns
    -------
    (n_done, t, status)
    """
    t = float(t0)
    for k in range(n_steps):
        Hvec, gmin, II_all, row = _diagnostics(kind, pos, h, m, band)
        if row[0] >= q_trigger:
            diag[k] = (t, 0.0) + row
            return k, t, TRIGGERED
        dt = stable_dt(dt_safety, II_all, gmin, h, m)
        for _ in range(MAX_HALVINGS + 1):
            trial = pos + dt * Hvec
            if kind == PROFILE:
                trial[0, 0] = 0.0
                trial[-1, 0] = 0.0
            if _acceptable(kind, trial, h):
                break
            dt *= 0.5
        else:
            return k, t, STALLED
        diag[k] = (t, dt) + row
        pos[...] = trial
        t += dt
    return n_steps, t, RAN_ALL
