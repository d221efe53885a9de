"""Intrinsic distances, geodesics and ball volumes.

Two tools live here:

* grid-graph shortest paths (scipy's Dijkstra) with edge lengths taken from a
  per-sample metric, used for ball inclusions;
* geodesic shooting on surfaces of revolution, integrated in R^3 with the
  Gauss formula x'' = II(x', x') and carried Jacobi fields, used for ball
  volumes and the injectivity-radius estimate.
"""
from __future__ import annotations

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from .immersion import Kind, SampledImmersion, profile_spline

# ---------------------------------------------------------------------------
# grid graphs


def curve_distances(g, h, anchor):
    """Cyclic arc-length distances from ``anchor`` with edge lengths h*sqrt(mean g)."""
    g = np.asarray(g, dtype=float).reshape(-1)
    edge = h * np.sqrt(0.5 * (g + np.roll(g, -1)))  # edge i -> i+1
    N = len(g)
    order = (np.arange(N) + anchor) % N
    fwd = np.concatenate([[0.0], np.cumsum(edge[order][:-1])])
    total = float(edge.sum())
    d = np.empty(N)
    d[order] = np.minimum(fwd, total - fwd)
    return d


_STENCIL8 = ((1, 0), (0, 1), (1, 1), (1, -1))


class GridGraph:
    """Nodes of a 2-D parameter grid with optional periodic second axis and
    collapsed pole rows (first and last rows of a profile grid)."""

    def __init__(self, shape, spacing, periodic=False, poles=False):
        self.shape = tuple(shape)
        self.spacing = tuple(spacing)
        self.periodic = periodic
        self.poles = poles
        N, M = self.shape
        ids = np.arange(N * M).reshape(N, M)
        if poles:
            ids = ids.copy()
            ids[0, :] = ids[0, 0]
            ids[-1, :] = ids[-1, 0]
        self.ids = ids
        src, dst, step = [], [], []
        for di, dj in _STENCIL8:
            i0 = np.arange(N)
            j0 = np.arange(M)
            I, Jj = np.meshgrid(i0, j0, indexing="ij")
            I2 = I + di
            J2 = Jj + dj
            ok = (I2 >= 0) & (I2 < N)
            if periodic:
                J2 = J2 % M
            else:
                ok &= (J2 >= 0) & (J2 < M)
            a = ids[I[ok], Jj[ok]]
            b = ids[I2[ok], J2[ok]]
            keep = a != b
            src.append(I[ok][keep] * M + Jj[ok][keep])
            dst.append(I2[ok][keep] * M + J2[ok][keep])
            step.append(np.broadcast_to(np.array([di * spacing[0], dj * spacing[1]]),
                                        (int(keep.sum()), 2)))
        self.src = np.concatenate(src)
        self.dst = np.concatenate(dst)
        self.step = np.concatenate(step)

    def distances(self, metric, anchor):
        """Dijkstra distances from the flat grid index ``anchor``.

        ``metric`` has shape (N, M, 2, 2) (or (N, 2, 2) for rows constant in
        the second axis); each edge uses the average of its endpoint metrics.
        """
        N, M = self.shape
        metric = np.asarray(metric, dtype=float)
        if metric.ndim == 3:
            metric = np.broadcast_to(metric[:, None], (N, M, 2, 2))
        G = metric.reshape(N * M, 2, 2)
        gbar = 0.5 * (G[self.src] + G[self.dst])
        w = np.sqrt(np.maximum(np.einsum("ei,eij,ej->e", self.step, gbar, self.step), 0.0))
        a = self.ids.ravel()[self.src]
        b = self.ids.ravel()[self.dst]
        # parallel edges (pole fans) keep the shortest through min-reduction
        w = np.maximum(w, 1e-300)
        mat = _min_duplicates(a, b, w, N * M)
        d = dijkstra(mat, directed=False, indices=int(self.ids.ravel()[anchor]))
        return d[self.ids].reshape(N, M)


def _min_duplicates(a, b, w, n):
    key = np.minimum(a, b) * n + np.maximum(a, b)
    order = np.lexsort((w, key))
    key, w = key[order], w[order]
    first = np.concatenate([[True], key[1:] != key[:-1]])
    k = key[first]
    return coo_matrix((w[first], (k // n, k % n)), shape=(n, n)).tocsr()


def profile_metric_rows(g):
    """(N, 2, 2) profile metric rows with the true (degenerate) pole metric."""
    g = np.array(g, dtype=float)
    g[0, 1, 1] = 0.0
    g[-1, 1, 1] = 0.0
    g[0, 0, 1] = g[0, 1, 0] = g[-1, 0, 1] = g[-1, 1, 0] = 0.0
    return g


def profile_grid(N, M=None):
    """Grid graph on (u, theta) with M angles (default 2 (N - 1))."""
    M = M or 2 * (N - 1)
    return GridGraph((N, M), (1.0, 2 * np.pi / M), periodic=True, poles=True)


# ---------------------------------------------------------------------------
# surfaces of revolution


class RevolutionSurface:
    """Arc-length description of a sampled surface of revolution.

    The profile is interpolated by a cubic spline in the grid parameter
    (continued through both poles by reflection), resampled densely and
    re-splined in arc length s, with s = 0 at the top pole.
    """

    def __init__(self, imm: SampledImmersion, oversample: int = 16):
        if imm.kind is not Kind.ROTATIONAL_PROFILE:
            raise ValueError("RevolutionSurface needs a rotational profile")
        spl = profile_spline(imm)
        u = imm.params[0]
        hu = u[1] - u[0]
        ghost = 4 * hu
        uf = np.linspace(u[0] - ghost, u[-1] + ghost,
                         oversample * (len(u) - 1 + 8) + 1)
        pf = spl(uf)
        seg = np.linalg.norm(np.diff(pf, axis=0), axis=1)
        s = np.concatenate([[0.0], np.cumsum(seg)])
        s -= np.interp(u[0], uf, s)
        self.P = CubicSpline(s, pf, axis=0)
        self.length = float(np.interp(u[-1], uf, s))
        self.param_to_s = lambda uu: np.interp(uu, uf, s)
        self.rho_scale = float(np.max(imm.positions[:, 0]))

    def frame(self, s):
        """rho, z, rho', z', k1, k2 at arc length s (principal curvatures, inward)."""
        p = self.P(s)
        d1 = self.P(s, 1)
        d2 = self.P(s, 2)
        speed = np.hypot(d1[..., 0], d1[..., 1])
        rs, zs = d1[..., 0] / speed, d1[..., 1] / speed
        k1 = (d2[..., 0] * d1[..., 1] - d2[..., 1] * d1[..., 0]) / speed ** 3
        rho = p[..., 0]
        small = np.abs(rho) < 1e-9 * max(self.rho_scale, 1e-300)
        k2 = np.where(small, k1, -zs / np.where(small, 1.0, rho))
        return rho, p[..., 1], rs, zs, k1, k2

    def closest(self, rho_x, z_x, s0, iters=4):
        """Newton iterations for the foot point s of (rho_x, z_x) on the profile."""
        s = np.array(s0, dtype=float)
        for _ in range(iters):
            p = self.P(s)
            d1 = self.P(s, 1)
            d2 = self.P(s, 2)
            dr = p[..., 0] - rho_x
            dz = p[..., 1] - z_x
            f = dr * d1[..., 0] + dz * d1[..., 1]
            fp = d1[..., 0] ** 2 + d1[..., 1] ** 2 + dr * d2[..., 0] + dz * d2[..., 1]
            s = s - f / fp
        return s

    def point(self, s, theta=0.0):
        p = self.P(s)
        return np.stack([p[..., 0] * np.cos(theta), p[..., 0] * np.sin(theta),
                         np.broadcast_to(p[..., 1], np.shape(p[..., 0]))], -1)


def _geo_rhs(surf, x, v, J, Jp, s_guess):
    rx = np.hypot(x[:, 0], x[:, 1])
    s = surf.closest(rx, x[:, 2], s_guess)
    rho, z, rs, zs, k1, k2 = surf.frame(s)
    safe = rx > 1e-14
    er = np.zeros_like(x)
    er[safe, 0] = x[safe, 0] / rx[safe]
    er[safe, 1] = x[safe, 1] / rx[safe]
    nu = zs[:, None] * er
    nu[:, 2] -= rs
    vth = np.where(safe, (x[:, 0] * v[:, 1] - x[:, 1] * v[:, 0]) / np.where(safe, rx, 1.0), 0.0)
    vv = np.einsum("kd,kd->k", v, v)
    hvv = k1 * vv + (k2 - k1) * vth * vth
    acc = hvv[:, None] * nu
    return v, acc, Jp, -(k1 * k2) * J, s


def _project(surf, x, v, s_guess):
    rx = np.hypot(x[:, 0], x[:, 1])
    s = surf.closest(rx, x[:, 2], s_guess)
    rho, z, rs, zs, _, _ = surf.frame(s)
    safe = rx > 1e-14
    cos = np.where(safe, x[:, 0] / np.where(safe, rx, 1.0), 1.0)
    sin = np.where(safe, x[:, 1] / np.where(safe, rx, 1.0), 0.0)
    # a negative spline rho means the foot point crossed the axis
    x = np.stack([rho * cos, rho * sin, z], -1)
    nu = np.stack([zs * cos, zs * sin, -rs], -1)
    v = v - np.einsum("kd,kd->k", v, nu)[:, None] * nu
    v /= np.linalg.norm(v, axis=1)[:, None]
    return x, v, s


class GeodesicFan:
    """Unit-speed geodesics from one profile point in several directions.

    ``phi`` measures the initial direction from the downward meridian
    (phi = 0) towards the positive angular direction.
    """

    def __init__(self, surf: RevolutionSurface, s0: float, phi):
        self.surf = surf
        phi = np.asarray(phi, dtype=float)
        K = len(phi)
        rho, z, rs, zs, _, _ = surf.frame(np.array([s0]))
        x0 = np.array([rho[0], 0.0, z[0]])
        em = np.array([rs[0], 0.0, zs[0]])
        et = np.array([0.0, 1.0, 0.0])
        self.x = np.tile(x0, (K, 1))
        self.v = np.cos(phi)[:, None] * em + np.sin(phi)[:, None] * et
        self.J = np.zeros(K)
        self.Jp = np.ones(K)
        self.s = np.full(K, float(s0))
        self.t = 0.0

    def step(self, dt):
        surf, x, v, J, Jp, s = self.surf, self.x, self.v, self.J, self.Jp, self.s
        k1x, k1v, k1J, k1P, s1 = _geo_rhs(surf, x, v, J, Jp, s)
        k2x, k2v, k2J, k2P, s2 = _geo_rhs(surf, x + 0.5 * dt * k1x, v + 0.5 * dt * k1v,
                                          J + 0.5 * dt * k1J, Jp + 0.5 * dt * k1P, s1)
        k3x, k3v, k3J, k3P, s3 = _geo_rhs(surf, x + 0.5 * dt * k2x, v + 0.5 * dt * k2v,
                                          J + 0.5 * dt * k2J, Jp + 0.5 * dt * k2P, s2)
        k4x, k4v, k4J, k4P, s4 = _geo_rhs(surf, x + dt * k3x, v + dt * k3v,
                                          J + dt * k3J, Jp + dt * k3P, s3)
        x = x + dt / 6 * (k1x + 2 * k2x + 2 * k3x + k4x)
        v = v + dt / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
        self.J = J + dt / 6 * (k1J + 2 * k2J + 2 * k3J + k4J)
        self.Jp = Jp + dt / 6 * (k1P + 2 * k2P + 2 * k3P + k4P)
        self.x, self.v, self.s = _project(surf, x, v, s4)
        self.t += dt


def _step_size(surf, r, kmax):
    return min(r / 200.0, 0.02 / max(kmax, 1e-12))


def _kmax(surf):
    s = np.linspace(0.0, surf.length, 2001)
    _, _, _, _, k1, k2 = surf.frame(s)
    return float(np.max(np.hypot(k1, k2)))


def ball_areas(imm: SampledImmersion, anchor: int, radii, n_dirs: int = 128):
    """Intrinsic areas of geodesic balls about profile sample ``anchor``.

    Area = integral over directions of integral_0^r J(t) dt, with J the
    normalized Jacobi field J'' + K J = 0, J(0) = 0, J'(0) = 1.  Valid while
    the radii stay below the injectivity radius at the anchor.
    """
    surf = RevolutionSurface(imm)
    radii = np.asarray(radii, dtype=float)
    s0 = float(surf.param_to_s(imm.params[0][anchor]))
    phi = 2 * np.pi * np.arange(n_dirs) / n_dirs
    fan = GeodesicFan(surf, s0, phi)
    rmax = float(radii.max())
    n = int(np.ceil(rmax / _step_size(surf, rmax, _kmax(surf))))
    # integrate exactly to each radius by splitting at the requested radii
    marks = np.sort(radii)
    ts = [0.0]
    Js = [fan.J.copy()]
    for r in marks:
        m = max(1, int(np.ceil((r - fan.t) / (rmax / n))))
        dt = (r - fan.t) / m
        for _ in range(m):
            fan.step(dt)
            ts.append(fan.t)
            Js.append(fan.J.copy())
    ts = np.array(ts)
    Js = np.array(Js)  # (steps, dirs)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(ts) * (Js[1:] + Js[:-1]).mean(axis=1))])
    areas = 2 * np.pi * np.interp(radii, ts, cum)
    return areas


def injectivity_estimate(imm: SampledImmersion, anchors=None, n_dirs: int = 32,
                         t_max: float | None = None):
    """Lower-fidelity injectivity radius of a surface of revolution.

    For each anchor (in the meridian plane y = 0) and each direction with a
    positive angular component, the geodesic is followed until either its
    Jacobi field vanishes (conjugate point) or it returns to the plane y = 0,
    where it meets its mirror image and closes a geodesic loop.  The estimate
    is the minimum of those event times, capped at ``t_max`` (default: the
    meridian length).
    """
    surf = RevolutionSurface(imm)
    N = len(imm.params[0])
    if anchors is None:
        anchors = np.unique(np.linspace(1, N - 2, 16).round().astype(int))
    if t_max is None:
        t_max = surf.length
    kmax = _kmax(surf)
    dt = min(t_max / 400.0, 0.02 / kmax)
    phi = np.pi * (np.arange(n_dirs) + 0.5) / n_dirs
    best = (np.inf, None, None, "cap")
    for a in anchors:
        s0 = float(surf.param_to_s(imm.params[0][a]))
        fan = GeodesicFan(surf, s0, phi)
        event = np.full(n_dirs, np.inf)
        kinds = np.array(["cap"] * n_dirs, dtype=object)
        prevJ = fan.J.copy()
        prevy = fan.x[:, 1].copy()
        limit = min(t_max, best[0])
        while fan.t < limit and np.any(np.isinf(event)):
            t_prev = fan.t
            fan.step(dt)
            live = np.isinf(event)
            conj = live & (fan.J <= 0) & (fan.t > dt)
            if np.any(conj):
                frac = prevJ[conj] / (prevJ[conj] - fan.J[conj])
                event[conj] = t_prev + frac * dt
                kinds[conj] = "conjugate"
            live = np.isinf(event)
            cross = live & (fan.x[:, 1] <= 0) & (prevy > 0)
            if np.any(cross):
                frac = prevy[cross] / (prevy[cross] - fan.x[cross, 1])
                event[cross] = t_prev + frac * dt
                kinds[cross] = "loop"
            prevJ = fan.J.copy()
            prevy = fan.x[:, 1].copy()
            if np.min(event) < limit:
                limit = float(np.min(event))
        k = int(np.argmin(event))
        if event[k] < best[0]:
            best = (float(event[k]), int(a), float(phi[k]), kinds[k])
    if not np.isfinite(best[0]):
        best = (float(t_max), None, None, "cap")
    return {"inj": best[0], "anchor": best[1], "direction": best[2], "event": best[3]}
