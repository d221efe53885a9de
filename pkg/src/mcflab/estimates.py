"""Inequality checks: algebraic identities, graph estimates, radii, balls, metrics.

Every check returns a :class:`~mcflab.records.CheckRecord` whose
``worst_margin`` is the signed slack of the inequality (negative means
violated) in the units given by ``CheckRecord.units``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import (DegenerateMetric, GraphFold, HypothesisViolated, PreconditionUnsatisfied, RadiusTooLarge,
                     Unsupported)
from .flow import Trajectory, material_resample
from .geodesics import (RevolutionSurface, ball_areas, curve_distances, injectivity_estimate,
                        profile_grid, profile_metric_rows)
from .geometry import (GeometryField, GraphData, compute_geometry, parameter_derivatives)
from .immersion import Kind, SampledImmersion
from .records import CheckRecord

TOL_IDENTITY = 1e-12
TOL_INEQUALITY = 1e-10
TOL_GEODESIC = 0.05
MAX_THETA_SAMPLES = 256


def _loc(flat_index, shape):
    return {"sample": int(flat_index), "grid": [int(i) for i in np.unravel_index(flat_index, shape)]}


# ---------------------------------------------------------------------------
# algebraic identities


def identity_checks(geom: GeometryField, scenario_id="", tol_identity=TOL_IDENTITY,
                    tol_ineq=TOL_INEQUALITY):
    """Pointwise identities of the A tensor at every sample.

    Returns records for tr_g A = |H|^2 (relative), |A| <= |H||II|,
    (tr A)^2 <= m|A|^2, symmetry of h, |A| = 0 iff |H| = 0, and the
    informational codimension-constant variant (tr A)^2 <= n|A|^2.
    """
    shape = geom.norm_H_sq.shape
    m, n = geom.m, geom.n
    H2, A2, II2, trA = geom.norm_H_sq, geom.norm_A_sq, geom.norm_II_sq, geom.tr_A
    scale = np.maximum(np.abs(H2), np.finfo(float).tiny)
    rel = np.abs(trA - H2) / scale
    zero_H = H2 == 0
    rel = np.where(zero_H, np.abs(trA), rel)
    i = int(np.argmax(rel))
    out = [CheckRecord("trace_identity", scenario_id, float(tol_identity - rel.ravel()[i]),
                       _loc(i, shape), 0.0, "relative",
                       details={"max_relative_error": float(rel.ravel()[i])})]
    # |A| <= |H||II|, compared in squares relative to |H|^2|II|^2
    big = np.maximum(H2 * II2, np.finfo(float).tiny)
    marg = (H2 * II2 - A2) / big
    i = int(np.argmin(marg))
    out.append(CheckRecord("A_le_H_II", scenario_id, float(marg.ravel()[i]), _loc(i, shape),
                           tol_ineq, "relative"))
    big = np.maximum(m * A2, np.finfo(float).tiny)
    marg = (m * A2 - trA ** 2) / big
    i = int(np.argmin(marg))
    out.append(CheckRecord("trace_cauchy_schwarz", scenario_id, float(marg.ravel()[i]),
                           _loc(i, shape), tol_ineq, "relative"))
    asym = np.abs(geom.h - np.swapaxes(geom.h, -3, -2)).max()
    out.append(CheckRecord("h_symmetry", scenario_id, float(-asym), {}, 0.0, "1/length"))
    zA = geom.norm_A_sq == 0
    mismatch = int(np.sum(zA != zero_H))
    out.append(CheckRecord("A_zero_iff_H_zero", scenario_id, float(-mismatch), {}, 0.0, "samples"))
    big = np.maximum(n * A2, np.finfo(float).tiny)
    marg = (n * A2 - trA ** 2) / big
    i = int(np.argmin(marg))
    rec = CheckRecord("trace_cauchy_schwarz_codim", scenario_id, float(marg.ravel()[i]),
                      _loc(i, shape), tol_ineq, "relative", status="informational")
    rec.details["holds"] = bool(marg.ravel()[i] >= -tol_ineq)
    out.append(rec)
    return out


def graph_crosscheck(gd: GraphData, scenario_id="", tol=1e-8) -> CheckRecord:
    """|II|^2 from the graph contraction vs the orthonormal-frame path."""
    from .geometry import geometry_from_derivatives
    geom = geometry_from_derivatives(gd.derivatives(), gd.n)
    a = gd.norm_II_sq()
    b = geom.norm_II_sq
    rel = np.abs(a - b) / np.maximum(np.maximum(a, b), 1e-300)
    rel = np.where(np.maximum(a, b) < 1e-300, 0.0, rel)
    i = int(np.argmax(rel))
    return CheckRecord("graph_II_crosscheck", scenario_id, float(tol - rel[i]), {"sample": i},
                       0.0, "relative")


# ---------------------------------------------------------------------------
# graph estimates


def hessian_bound_check(gd: GraphData, scenario_id="", tol=TOL_INEQUALITY) -> CheckRecord:
    """(1 + |Dpsi|^2)^3 |II|^2_g - |D^2 psi|^2 >= 0 at every sample."""
    lhs = gd.hess_sq
    rhs = (1.0 + gd.grad_sq) ** 3 * gd.norm_II_sq()
    margin = rhs - lhs
    scale = max(1.0, float(np.max(np.abs(lhs))))
    i = int(np.argmin(margin))
    return CheckRecord("hessian_bound", scenario_id, float(margin[i]), {"sample": i},
                       tol * scale, "1/length^2",
                       details={"max_margin": float(margin.max()),
                                "max_abs_margin": float(np.max(np.abs(margin))),
                                "m": gd.m, "n": gd.n})


def eigen_bound_check(gd: GraphData, scenario_id="", tol=TOL_INEQUALITY) -> CheckRecord:
    """Eigenvalues of g_tan and g_nor in [1, 1 + |Dpsi|^2]; inverses in [1/(1+|Dpsi|^2), 1]."""
    top = 1.0 + gd.grad_sq
    margins = []
    for name, mat in (("g_tan", gd.g_tan), ("g_nor", gd.g_nor)):
        lam = np.linalg.eigvalsh(mat)
        margins.append((name + ":lower", lam.min(axis=1) - 1.0))
        margins.append((name + ":upper", top - lam.max(axis=1)))
        inv = 1.0 / lam
        margins.append((name + "^-1:lower", inv.min(axis=1) - 1.0 / top))
        margins.append((name + "^-1:upper", 1.0 - inv.max(axis=1)))
    worst = min(((float(v.min()), name, int(np.argmin(v))) for name, v in margins))
    return CheckRecord("eigen_bound", scenario_id, worst[0], {"sample": worst[2], "bound": worst[1]},
                       tol * float(top.max()), "dimensionless")


# ---------------------------------------------------------------------------
# (r, alpha) graph radius


@dataclass
class TangentGraphPatch:
    """Tangent-plane graph representation of the immersion about anchor q.

    ``rotation`` maps ambient vectors to coordinates whose first m entries
    span T_qM; ``mask`` is the component U_{r,q} on the sample grid.
    """

    anchor: int
    origin: np.ndarray
    rotation: np.ndarray
    radius: float
    mask: np.ndarray
    sup_grad: float
    is_graph: bool
    psi_at_anchor: float
    grad_at_anchor: float


def graph_radius_bound(alpha, sup_II):
    return alpha / ((1.0 + alpha * alpha) ** 1.5 * sup_II)


class _CurvePatcher:
    def __init__(self, imm: SampledImmersion):
        self.imm = imm
        d = parameter_derivatives(imm)
        self.X = imm.positions
        self.T = d.Fi[:, 0, :] / np.linalg.norm(d.Fi[:, 0, :], axis=1)[:, None]

    def rotation(self, q):
        t = self.T[q]
        d = len(t)
        # orthonormal completion with t first
        basis = np.linalg.qr(np.column_stack([t, np.eye(d)]))[0]
        R = basis.T
        if R[0] @ t < 0:
            R[0] = -R[0]
        return R

    def patch(self, q, r, alpha):
        R = self.rotation(q)
        Y = (self.X - self.X[q]) @ R.T
        xi = Y[:, 0]
        N = len(xi)
        inside = np.abs(xi) <= r
        order = (np.arange(N) + q) % N
        ins = inside[order]
        if ins.all():
            mask = inside.copy()
            return mask, False, np.inf, Y
        # cyclic run of inside samples through q: fwd from q, rev_run before q
        fwd = int(np.argmin(ins))
        rev_run = int(np.argmin(np.concatenate([ins[:0:-1], [False]])))
        seq = np.concatenate([order[N - rev_run:], order[:fwd]])
        mask = np.zeros(N, dtype=bool)
        mask[seq] = True
        tq = self.T @ R[0]
        mono = bool(np.all(np.diff(xi[seq]) > 0))
        c = tq[mask]
        if np.any(c <= 0):
            return mask, False, np.inf, Y
        slope = np.sqrt(np.maximum(1.0 - c * c, 0.0)) / c
        return mask, bool(mono), float(slope.max()), Y


class _ProfilePatcher:
    def __init__(self, imm: SampledImmersion, theta_samples: int = MAX_THETA_SAMPLES):
        self.imm = imm
        N = len(imm.params[0])
        self.N = N
        self.M = theta_samples
        theta = 2 * np.pi * np.arange(self.M) / self.M
        rho, z = imm.positions[:, 0], imm.positions[:, 1]
        self.theta = theta
        self.X = np.stack([rho[:, None] * np.cos(theta), rho[:, None] * np.sin(theta),
                           np.broadcast_to(z[:, None], (N, self.M))], -1)
        d = parameter_derivatives(imm)
        Fu = d.Fi[:, 0, :]  # (N, 3) at theta = 0: (rho_u, 0, z_u)
        s = np.hypot(Fu[:, 0], Fu[:, 2])
        nr, nz = Fu[:, 2] / s, -Fu[:, 0] / s
        self.nu = np.stack([nr[:, None] * np.cos(theta), nr[:, None] * np.sin(theta),
                            np.broadcast_to(nz[:, None], (N, self.M))], -1)
        self.em = np.stack([Fu[:, 0] / s, np.zeros(N), Fu[:, 2] / s], -1)
        dXu = np.stack([Fu[:, 0, None] * np.cos(theta), Fu[:, 0, None] * np.sin(theta),
                        np.broadcast_to(Fu[:, 2, None], (N, self.M))], -1)
        dXt = np.stack([-rho[:, None] * np.sin(theta), rho[:, None] * np.cos(theta),
                        np.zeros((N, self.M))], -1)
        self.dX = (dXu, dXt)

    def rotation(self, i):
        e1 = self.em[i]
        e2 = np.array([0.0, 1.0, 0.0])
        n = self.nu[i, 0]
        return np.stack([e1, e2, n])

    def patch(self, i, r, alpha):
        R = self.rotation(i)
        X0 = self.X[i, 0]
        Y = (self.X - X0) @ R.T
        rad = np.hypot(Y[..., 0], Y[..., 1])
        inside = rad <= r
        mask = _component(inside, i)
        if mask.all() or np.all(mask[1:-1]):
            return mask, False, np.inf, Y
        c = np.einsum("ijd,d->ij", self.nu, R[2])
        cm = c[mask]
        if np.any(cm <= 0):
            return mask, False, np.inf, Y
        slope = float(np.max(np.sqrt(np.maximum(1.0 - cm * cm, 0.0)) / cm))
        # Jacobian of (u, theta) -> projected coordinates away from the poles
        inner = mask.copy()
        inner[0] = inner[-1] = False
        a = self.dX[0][inner] @ R[:2].T
        b = self.dX[1][inner] @ R[:2].T
        det = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
        # u increases along e1 and theta along e2 at the anchor, so det > 0 there
        graph = bool(np.all(det > 0))
        return mask, graph, slope, Y


def _component(inside, i):
    """Connected component of ``inside`` containing (i, 0) on the (u, theta)
    grid: 8-connectivity, periodic in theta, pole rows collapsed to a point."""
    N, M = inside.shape
    ext = np.concatenate([inside, inside[:, :1]], axis=1)
    lab, n = ndimage.label(ext, structure=np.ones((3, 3)))
    parent = np.arange(n + 1)

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(a, b):
        if a and b:
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)

    for row in range(N):
        union(lab[row, 0], lab[row, M])
        if row + 1 < N:
            union(lab[row, M - 1], lab[row + 1, M])
            union(lab[row + 1, M - 1], lab[row, M])
    for row in (0, N - 1):
        labs = np.unique(lab[row, :M])
        labs = labs[labs > 0]
        for a in labs[1:]:
            union(labs[0], a)
    roots = np.array([find(a) for a in range(n + 1)])
    comp = roots[lab[:, :M]]
    target = comp[i, 0]
    if target == 0:
        return np.zeros_like(inside)
    return comp == target


def _patcher(imm):
    if imm.kind is Kind.CLOSED_CURVE:
        return _CurvePatcher(imm)
    if imm.kind is Kind.ROTATIONAL_PROFILE:
        return _ProfilePatcher(imm)
    raise Unsupported("graph radius checks need closed curves or rotational profiles")


def failure_radius(patcher, q, alpha, r_hi, iters=40):
    """Smallest radius where the graph property or |Dpsi| <= alpha fails (bisection)."""
    def ok(r):
        _, graph, slope, _ = patcher.patch(q, r, alpha)
        return graph and slope <= alpha
    lo, hi = 0.0, r_hi
    if ok(hi):
        return hi
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return hi


def graph_radius_check(imm: SampledImmersion, q: int, alpha: float = 1.0, scenario_id="",
                       sup_II: float | None = None, with_failure_radius: bool = True,
                       patcher=None):
    """Tangent-plane graph over the disc of radius r* = alpha/((1+alpha^2)^1.5 sup|II|).

    Returns (TangentGraphPatch, CheckRecord).  The margin is alpha - sup|Dpsi|
    on U_{r*,q}; a fold gives margin -inf and ``details['fold']``.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    patcher = patcher or _patcher(imm)
    if sup_II is None:
        sup_II = float(np.sqrt(compute_geometry(imm).masked_max("norm_II_sq")))
    r_star = graph_radius_bound(alpha, sup_II)
    mask, graph, slope, Y = patcher.patch(q, r_star, alpha)
    R = patcher.rotation(q)
    flat_q = q if imm.kind is Kind.CLOSED_CURVE else (q, 0)
    yq = Y[flat_q]
    tq = patcher.T[q] @ R[0] if imm.kind is Kind.CLOSED_CURVE else 1.0
    patch = TangentGraphPatch(int(q), imm.ambient_positions()[q], R, r_star, mask,
                              slope, graph, float(np.linalg.norm(yq[imm.m:])),
                              float(np.sqrt(max(1 - tq * tq, 0.0)) / tq) if tq > 0 else np.inf)
    details = {"r_star": r_star, "sup_grad": slope, "sup_II": sup_II}
    margin = alpha - slope if graph else -np.inf
    if not graph:
        details["fold"] = str(GraphFold(f"projection not injective on U_(r*,q) at anchor {q}"))
    if with_failure_radius:
        extent = float(np.max(np.linalg.norm(imm.ambient_positions() - imm.ambient_positions()[q],
                                              axis=-1)))
        fr = failure_radius(patcher, q, alpha, 1.01 * extent)
        details["failure_radius"] = fr
        details["failure_margin"] = fr - r_star
        margin = min(margin, fr - r_star)
    rec = CheckRecord("graph_radius", scenario_id, float(margin), {"anchor": int(q)},
                      TOL_INEQUALITY, "dimensionless/length", details=details)
    return patch, rec


def graph_radius_sweep(imm: SampledImmersion, anchors=64, alpha=1.0, scenario_id=""):
    """graph_radius_check over evenly spaced anchors; one merged record."""
    patcher = _patcher(imm)
    N = imm.grid_shape[0]
    if imm.kind is Kind.ROTATIONAL_PROFILE:
        idx = np.unique(np.linspace(0, N - 1, anchors).round().astype(int))
    else:
        idx = (np.arange(anchors) * N) // anchors
    sup_II = float(np.sqrt(compute_geometry(imm).masked_max("norm_II_sq")))
    worst = None
    failures = 0
    min_ratio = np.inf
    for q in idx:
        _, rec = graph_radius_check(imm, int(q), alpha, scenario_id, sup_II, True, patcher)
        failures += not rec.passed
        min_ratio = min(min_ratio, rec.details["failure_radius"] / rec.details["r_star"])
        if worst is None or rec.worst_margin < worst.worst_margin:
            worst = rec
    worst.details = dict(worst.details, anchors=int(len(idx)), failures=int(failures),
                         min_failure_ratio=float(min_ratio))
    return worst


# ---------------------------------------------------------------------------
# injectivity radius


def injectivity_bound(sup_II):
    return 1.0 / (2.0 * np.sqrt(2.0) * sup_II)


def injectivity_bound_check(imm: SampledImmersion, scenario_id="", tol=TOL_GEODESIC,
                            **kw) -> CheckRecord:
    """inj >= 1/(2 sqrt(2) max|II|): exact L/2 for curves, geodesic estimate for profiles."""
    if imm.kind is Kind.DISC_GRAPH:
        raise Unsupported("injectivity radius is not defined for graphs with boundary")
    geom = compute_geometry(imm)
    sup_II = float(np.sqrt(geom.masked_max("norm_II_sq")))
    bound = injectivity_bound(sup_II)
    if imm.kind is Kind.CLOSED_CURVE:
        closed = np.vstack([imm.positions, imm.positions[:1]])
        L = float(np.sum(np.linalg.norm(np.diff(closed, axis=0), axis=1)))
        inj, info, tol = L / 2.0, {"length": L}, TOL_INEQUALITY * bound
    else:
        info = injectivity_estimate(imm, **kw)
        inj, tol = info["inj"], tol * bound
    return CheckRecord("injectivity_bound", scenario_id, float(inj - bound), {}, tol, "length",
                       details=dict(info, inj=inj, bound=bound, sup_II=sup_II,
                                    ratio=inj / bound))


# ---------------------------------------------------------------------------
# metric comparisons


def relative_eigenvalues(g0, g1):
    """Generalized eigenvalues of g1 with respect to g0 per sample, (S, m)."""
    g0 = np.asarray(g0).reshape(-1, *g0.shape[-2:])
    g1 = np.asarray(g1).reshape(-1, *g1.shape[-2:])
    m = g0.shape[-1]
    if m == 1:
        return g1[:, :, 0] / g0[:, :, 0]
    L = np.linalg.cholesky(g0)
    Linv = np.linalg.inv(L)
    S = Linv @ g1 @ np.swapaxes(Linv, -1, -2)
    return np.linalg.eigvalsh(0.5 * (S + np.swapaxes(S, -1, -2)))


def _pair_metrics(traj: Trajectory, k0: int, k1: int):
    """Metrics of snapshots k0 and k1 on the grid of k0 (material correspondence)."""
    a, b = traj.snapshots[k0], traj.snapshots[k1]
    ga = traj.geometry(k0)
    if a.reparam_count == b.reparam_count:
        gb = traj.geometry(k1)
    else:
        gb = compute_geometry(material_resample(b.imm, a.imm.labels), traj.band)
    return ga, gb


def usable_snapshots(traj: Trajectory):
    """Snapshot indices whose induced metric is non-degenerate."""
    out = []
    for k in range(len(traj.snapshots)):
        try:
            traj.geometry(k)
        except DegenerateMetric:
            continue
        out.append(k)
    return out


def _interior(imm, arr):
    if imm.kind is Kind.ROTATIONAL_PROFILE:
        return arr[1:-1]
    return arr


def measured_eps(g0, g1, imm):
    lam = relative_eigenvalues(_interior(imm, g0), _interior(imm, g1))
    return float(np.max(np.abs(lam - 1.0)))


def _distance_fn(imm: SampledImmersion):
    if imm.kind is Kind.CLOSED_CURVE:
        h = imm.spacing[0]
        return lambda g, p: curve_distances(g[:, 0, 0], h, p)
    if imm.kind is Kind.ROTATIONAL_PROFILE:
        N = imm.grid_shape[0]
        grid = profile_grid(N, min(2 * (N - 1), MAX_THETA_SAMPLES))
        h = imm.spacing[0]

        def dist(g, p):
            rows = profile_metric_rows(g) * np.array([[h * h, h], [h, 1.0]])
            return grid.distances(rows, p * grid.shape[1])
        return dist
    raise Unsupported("ball inclusions are checked on curves and profiles")


def ball_inclusion_check(imm: SampledImmersion, g0, g1, eps: float, p: int, r: float,
                         scenario_id="", tol=TOL_INEQUALITY) -> CheckRecord:
    """B_g0(p, r/sqrt(1+eps)) in B_g1(p, r) in B_g0(p, r/sqrt(1-eps)) on the sample grid.

    Raises
    ------
    HypothesisViolated
        If (1-eps) g0 <= g1 <= (1+eps) g0 fails at some sample.
    """
    eps_meas = measured_eps(g0, g1, imm)
    if eps_meas > eps * (1 + 1e-12) + 1e-15:
        raise HypothesisViolated(f"metric deviation {eps_meas:.6g} exceeds eps = {eps:.6g}")
    if not 0.0 <= eps < 1.0:
        raise HypothesisViolated("eps must lie in [0, 1)")
    dist = _distance_fn(imm)
    d0 = dist(g0, p)
    d1 = dist(g1, p)
    inner = d0 <= r / np.sqrt(1 + eps)
    outer = d1 <= r
    m1 = float(np.min(r - d1[inner])) if inner.any() else np.inf
    m2 = float(np.min(r / np.sqrt(1 - eps) - d0[outer])) if outer.any() else np.inf
    margin = min(m1, m2)
    return CheckRecord("ball_inclusion", scenario_id, margin, {"anchor": int(p)}, tol * r,
                       "length", details={"eps": eps, "eps_measured": eps_meas, "r": r,
                                          "inner_margin": m1, "outer_margin": m2,
                                          "inner_count": int(inner.sum()),
                                          "outer_count": int(outer.sum())})


def ball_inclusion_suite(traj: Trajectory, pairs: int = 10, scenario_id=None):
    """Lemma-style inclusions on flow-generated metric pairs (consecutive snapshots)."""
    sid = scenario_id or traj.scenario_id
    usable = set(usable_snapshots(traj))
    cand = [k for k in range(len(traj.snapshots) - 1) if k in usable and k + 1 in usable]
    pick = np.unique(np.linspace(0, len(cand) - 1, pairs).round().astype(int))
    ks = [cand[i] for i in pick]
    records = []
    for k in ks:
        ga, gb = _pair_metrics(traj, int(k), int(k) + 1)
        imm = traj.snapshots[int(k)].imm
        eps = measured_eps(ga.g, gb.g, imm)
        if eps >= 1.0:
            continue
        p = ga.argmax("norm_II_sq")
        dist = _distance_fn(imm)
        diam = float(np.max(dist(ga.g, p)))
        rec = ball_inclusion_check(imm, ga.g, gb.g, eps, p, 0.25 * diam, sid)
        rec.worst_location.update({"snapshots": [int(k), int(k) + 1]})
        records.append(rec)
    worst = min(records, key=lambda r: r.worst_margin)
    worst = CheckRecord("ball_inclusion", sid, worst.worst_margin, worst.worst_location,
                        worst.tolerance, "length",
                        details=dict(worst.details, pairs=len(records),
                                     failures=sum(not r.passed for r in records),
                                     skipped_snapshots=len(traj.snapshots) - len(usable)))
    return worst, records


def metric_equivalence_check(traj: Trajectory, scenario_id=None, tol=TOL_INEQUALITY) -> CheckRecord:
    """e^{-2I(t)} g(0) <= g(t) <= e^{2I(t)} g(0) at every sample and snapshot.

    The margin is the log-slack min(2I - |log lambda|) over relative
    eigenvalues lambda of g(t) with respect to g(0).
    """
    sid = scenario_id or traj.scenario_id
    I_col = traj.column("I")
    worst = (np.inf, 0, 0)
    usable = usable_snapshots(traj)
    for k in usable[1:]:
        g0, gk = _pair_metrics(traj, 0, k)
        imm = traj.snapshots[0].imm
        lam = relative_eigenvalues(_interior(imm, g0.g), _interior(imm, gk.g))
        I = I_col[min(traj.snapshots[k].step, len(I_col) - 1)]
        slack = 2.0 * I - np.abs(np.log(lam)).max(axis=-1)
        j = int(np.argmin(slack))
        if slack[j] < worst[0]:
            worst = (float(slack[j]), k, j)
    return CheckRecord("metric_equivalence", sid, worst[0],
                       {"snapshot": worst[1], "sample": worst[2]}, tol, "log-ratio",
                       details={"I_final": float(I_col[-1]),
                                "skipped_snapshots": len(traj.snapshots) - len(usable)})


def two_tensor_norm(S, g_inv):
    return np.sqrt(np.abs(np.einsum("...ij,...kl,...ik,...jl->...", S, S, g_inv, g_inv)))


def integrated_estimate_bound(p, Cp, T, t0, t1):
    e = 1.0 - 1.0 / p
    return 2.0 * Cp / e * ((T - t0) ** e - (T - t1) ** e)


def metric_path_estimate(g_ref, g_a, g_b, p, Cp, T, t0, t1, scenario_id="",
                         tol=TOL_INEQUALITY) -> CheckRecord:
    """Integrated estimate for an explicit metric path: |g_b - g_a|_{g_ref} against the bound."""
    g_ref_inv = np.linalg.inv(np.asarray(g_ref, dtype=float))
    lhs = np.atleast_1d(two_tensor_norm(np.asarray(g_b) - np.asarray(g_a), g_ref_inv))
    bound = integrated_estimate_bound(p, Cp, T, t0, t1)
    j = int(np.argmax(lhs))
    return CheckRecord("integrated_estimate", scenario_id, float(bound - lhs[j]), {"sample": j},
                       tol * max(bound, 1.0), "length^2/parameter^2 (g(0)-normalized)",
                       details={"lhs": float(lhs[j]), "bound": float(bound), "C_prime": Cp,
                                "p": p, "t0": t0, "t1": t1, "T": T})


def integrated_estimate_check(traj: Trajectory, p: float, C: float, k0: int, k1: int,
                              T: float, scenario_id=None, tol=TOL_INEQUALITY) -> CheckRecord:
    """|g(t1) - g(t0)|_{g(0)} <= (2C'/(1-1/p)) ((T-t0)^(1-1/p) - (T-t1)^(1-1/p)).

    C' = Lambda * C_H * C_rate^(1/p) with measured constants on [t0, t1]:
    C_rate = max |II|^p (T - t), C_H = max |H|, and Lambda the largest
    eigenvalue of g(0)^-1 g(t), which converts g(t)-norms of two-tensors to
    g(0)-norms.

    Raises
    ------
    PreconditionUnsatisfied
        If the measured rate constant or H bound exceeds ``C``.
    """
    sid = scenario_id or traj.scenario_id
    s0, s1 = traj.snapshots[k0], traj.snapshots[k1]
    rows = slice(s0.step, s1.step + 1)
    t = traj.column("t")[rows]
    q = traj.column("max_II")[rows]
    Hm = traj.column("max_H")[rows]
    C_rate = float(np.max(q ** p * (T - t)))
    C_H = float(np.max(Hm))
    if C_rate > C or C_H > C:
        raise PreconditionUnsatisfied(
            f"measured |II|^p (T-t) <= {C_rate:.4g} and |H| <= {C_H:.4g} exceed C = {C}")
    g_init, _ = _pair_metrics(traj, 0, 0)
    imm = traj.snapshots[0].imm
    Lam = 1.0
    for k in range(k0, k1 + 1):
        _, gk = _pair_metrics(traj, 0, k)
        lam = relative_eigenvalues(_interior(imm, g_init.g), _interior(imm, gk.g))
        Lam = max(Lam, float(lam.max()))
    ga, gb = _pair_metrics(traj, 0, k0)[1], _pair_metrics(traj, 0, k1)[1]
    lhs = _interior(imm, two_tensor_norm(gb.g - ga.g, g_init.g_inv))
    Cp = Lam * C_H * C_rate ** (1.0 / p)
    bound = integrated_estimate_bound(p, Cp, T, s0.t, s1.t)
    j = int(np.argmax(lhs))
    return CheckRecord("integrated_estimate", sid, float(bound - lhs[j]), {"sample": j},
                       tol * max(bound, 1.0), "length^2/parameter^2 (g(0)-normalized)",
                       details={"lhs": float(lhs[j]), "bound": float(bound), "C_prime": Cp,
                                "Lambda": Lam, "C_H": C_H, "C_rate": C_rate, "p": p,
                                "t0": s0.t, "t1": s1.t, "T": T})


# ---------------------------------------------------------------------------
# volume growth


def unit_ball_volume(m):
    from math import gamma, pi
    return pi ** (m / 2) / gamma(m / 2 + 1)


def intrinsic_diameter(imm: SampledImmersion) -> float:
    if imm.kind is Kind.CLOSED_CURVE:
        closed = np.vstack([imm.positions, imm.positions[:1]])
        return float(np.sum(np.linalg.norm(np.diff(closed, axis=0), axis=1)) / 2.0)
    if imm.kind is Kind.ROTATIONAL_PROFILE:
        return RevolutionSurface(imm).length
    raise Unsupported("volume growth is checked on curves and profiles")


def ball_volumes(imm: SampledImmersion, anchor: int, radii):
    radii = np.asarray(radii, dtype=float)
    if imm.kind is Kind.CLOSED_CURVE:
        closed = np.vstack([imm.positions, imm.positions[:1]])
        L = float(np.sum(np.linalg.norm(np.diff(closed, axis=0), axis=1)))
        return np.minimum(2.0 * radii, L)
    return ball_areas(imm, anchor, radii)


def volume_growth_check(imm: SampledImmersion, anchor: int, radii=(0.1, 0.2, 0.3),
                        scenario_id="", geom: GeometryField | None = None,
                        tol=TOL_GEODESIC) -> CheckRecord:
    """V(r) / (omega_m r^m) against 1 - R(p) r^2 / (6 (m + 2)).

    Raises
    ------
    RadiusTooLarge
        If a radius exceeds half the intrinsic diameter.
    """
    geom = geom or compute_geometry(imm)
    radii = np.asarray(radii, dtype=float)
    diam = intrinsic_diameter(imm)
    if np.any(radii > 0.5 * diam):
        raise RadiusTooLarge(f"radius {radii.max():.3g} exceeds half the diameter {diam:.3g}")
    m = imm.m
    R = float(geom.scalar_R.ravel()[anchor])
    V = ball_volumes(imm, anchor, radii)
    ratio = V / (unit_ball_volume(m) * radii ** m)
    expansion = 1.0 - R * radii ** 2 / (6.0 * (m + 2))
    dev = np.abs(ratio - expansion) / expansion
    allow = np.maximum(tol, radii ** 3)
    slack = allow - dev
    j = int(np.argmin(slack))
    return CheckRecord("volume_growth", scenario_id, float(slack[j]),
                       {"anchor": int(anchor), "radius": float(radii[j])}, 0.0, "relative",
                       details={"radii": radii.tolist(), "ratios": ratio.tolist(),
                                "expansion": expansion.tolist(), "R": R,
                                "max_II": float(np.sqrt(geom.masked_max("norm_II_sq")))})


# ---------------------------------------------------------------------------
# seeded graph sweeps


def random_graph_suite(check, m, n, degree, seeds, samples=64, radius=1.0, base_seed=0,
                       scenario_id="graph-sweep"):
    """Run ``check`` on ``seeds`` random polynomial graphs over D_radius.

    Seed k draws its coefficients from ``default_rng(base_seed + k)``.
    Returns the worst record, annotated with the seed count and failures.
    """
    from .immersion import PolynomialMap
    worst, failures = None, 0
    for k in range(seeds):
        psi = PolynomialMap.random(m, n, degree, np.random.default_rng(base_seed + k))
        gd = GraphData.from_polynomial(psi, radius, samples)
        rec = check(gd, scenario_id)
        rec.worst_location = dict(rec.worst_location, seed=base_seed + k)
        failures += not rec.passed
        if worst is None or rec.worst_margin < worst.worst_margin:
            worst = rec
    worst.details = dict(worst.details, seeds=seeds, failures=failures, m=m, n=n, degree=degree)
    return worst
