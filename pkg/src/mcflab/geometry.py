"""Tensor geometry of sampled immersions.

Everything here is a pure function of the sample positions.  Derivatives are
second-order central differences on the parameter grid (periodic for closed
curves, one-sided second-order stencils on graph boundaries).  Rotational
profiles are lifted to the meridian plane theta = 0 with exact angular
derivatives, so their tensors are genuine 2x2 objects in R^3.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateMetric, FrameFailure
from .immersion import Kind, PolynomialMap, SampledImmersion

TOL_DEGENERATE = 1e-12
TOL_FRAME = 1e-6
POLE_BAND = 2


@dataclass
class Derivatives:
    """First and second parameter derivatives of F, ambient components last.

    ``Fi`` has shape grid + (m, d); ``Fij`` has shape grid + (m, m, d).
    """

    Fi: np.ndarray
    Fij: np.ndarray


@dataclass
class GeometryField:
    """Per-sample geometry; all arrays carry the immersion grid shape first."""

    g: np.ndarray            # (..., m, m)   length^2 per parameter^2
    g_inv: np.ndarray        # (..., m, m)
    vol_density: np.ndarray  # (...)         sqrt(det g)
    normal_frame: np.ndarray  # (..., n, d)  orthonormal nu_alpha
    h: np.ndarray            # (..., m, m, n) h_ij^alpha
    H: np.ndarray            # (..., n)      H^alpha
    A: np.ndarray            # (..., m, m)   A_ij = H^alpha h_ij^alpha
    norm_II_sq: np.ndarray
    norm_H_sq: np.ndarray
    norm_A_sq: np.ndarray
    tr_A: np.ndarray
    scalar_R: np.ndarray
    norm_mask: np.ndarray    # samples that enter max-norms

    @property
    def m(self) -> int:
        return self.g.shape[-1]

    @property
    def n(self) -> int:
        return self.H.shape[-1]

    def H_vector(self) -> np.ndarray:
        """Mean curvature as an ambient vector, (..., d)."""
        return np.einsum("...a,...ad->...d", self.H, self.normal_frame)

    def masked_max(self, field: str) -> float:
        vals = getattr(self, field)
        return float(np.max(vals[self.norm_mask]))

    def argmax(self, field: str = "norm_II_sq") -> int:
        """Flat sample index of the maximum over the norm mask (lowest index on ties)."""
        vals = np.where(self.norm_mask, getattr(self, field), -np.inf).ravel()
        return int(np.argmax(vals))


# ---------------------------------------------------------------------------
# derivatives


def _periodic_derivatives(pos, h):
    fp = np.roll(pos, -1, axis=0)
    fm = np.roll(pos, 1, axis=0)
    Fu = (fp - fm) / (2 * h)
    Fuu = (fp - 2 * pos + fm) / (h * h)
    return Fu, Fuu


def _profile_derivatives(pos, h):
    """(rho, z) derivatives with reflection ghosts across the axis at both poles."""
    ghost_top = pos[1] * np.array([-1.0, 1.0])
    ghost_bot = pos[-2] * np.array([-1.0, 1.0])
    ext = np.concatenate([ghost_top[None], pos, ghost_bot[None]])
    Fu = (ext[2:] - ext[:-2]) / (2 * h)
    Fuu = (ext[2:] - 2 * ext[1:-1] + ext[:-2]) / (h * h)
    return Fu, Fuu


def lift_profile(pos, Fu, Fuu):
    """Lift profile derivatives to (u, theta) derivatives in R^3 at theta = 0.

    At the poles the angular coordinate degenerates; there the theta direction
    is replaced by the u direction rotated a quarter turn about the axis, which
    is the smooth limit of the normalized angular frame.
    """
    N = pos.shape[0]
    rho = pos[:, 0]
    Fi = np.zeros((N, 2, 3))
    Fij = np.zeros((N, 2, 2, 3))
    Fi[:, 0, 0] = Fu[:, 0]
    Fi[:, 0, 2] = Fu[:, 1]
    Fi[:, 1, 1] = rho
    Fij[:, 0, 0, 0] = Fuu[:, 0]
    Fij[:, 0, 0, 2] = Fuu[:, 1]
    Fij[:, 0, 1, 1] = Fu[:, 0]
    Fij[:, 1, 0, 1] = Fu[:, 0]
    Fij[:, 1, 1, 0] = -rho
    for k in (0, N - 1):
        Fi[k, 1] = (0.0, abs(Fu[k, 0]), 0.0)
        Fij[k, 0, 1] = 0.0
        Fij[k, 1, 0] = 0.0
        Fij[k, 1, 1] = (0.0, 0.0, Fuu[k, 1])
    return Fi, Fij


def parameter_derivatives(imm: SampledImmersion) -> Derivatives:
    if imm.kind is Kind.CLOSED_CURVE:
        Fu, Fuu = _periodic_derivatives(imm.positions, imm.spacing[0])
        return Derivatives(Fu[:, None, :], Fuu[:, None, None, :])
    if imm.kind is Kind.ROTATIONAL_PROFILE:
        Fu, Fuu = _profile_derivatives(imm.positions, imm.spacing[0])
        return Derivatives(*lift_profile(imm.positions, Fu, Fuu))
    # disc graph: np.gradient gives central differences inside and
    # second-order one-sided stencils on the boundary rows
    pos = imm.positions
    m = imm.m
    axes = tuple(range(m))
    first = np.gradient(pos, *imm.spacing, axis=axes, edge_order=2)
    if m == 1:
        first = [first]
    Fi = np.stack(first, axis=-2)
    Fij = np.empty(pos.shape[:-1] + (m, m, pos.shape[-1]))
    for i in range(m):
        sec = np.gradient(first[i], *imm.spacing, axis=axes, edge_order=2)
        if m == 1:
            sec = [sec]
        for j in range(m):
            Fij[..., i, j, :] = sec[j]
    # symmetrize mixed partials (they agree to rounding on smooth data)
    Fij = 0.5 * (Fij + np.swapaxes(Fij, -3, -2))
    return Derivatives(Fi, Fij)


# ---------------------------------------------------------------------------
# metric, frame, second fundamental form


def induced_metric(Fi: np.ndarray, tol: float = TOL_DEGENERATE):
    """g_ij = dF_i . dF_j with inverse and sqrt(det g).

    Raises
    ------
    DegenerateMetric
        If det g <= ``tol`` at any sample (flat index reported).
    """
    g = np.einsum("...id,...jd->...ij", Fi, Fi)
    det = np.linalg.det(g)
    bad = det <= tol
    if np.any(bad):
        idx = int(np.flatnonzero(bad.ravel())[0])
        raise DegenerateMetric(idx, float(det.ravel()[idx]))
    m = g.shape[-1]
    if m == 1:
        g_inv = 1.0 / g
    elif m == 2:
        g_inv = np.empty_like(g)
        g_inv[..., 0, 0] = g[..., 1, 1]
        g_inv[..., 1, 1] = g[..., 0, 0]
        g_inv[..., 0, 1] = -g[..., 0, 1]
        g_inv[..., 1, 0] = -g[..., 1, 0]
        g_inv /= det[..., None, None]
    else:
        g_inv = np.linalg.inv(g)
    return g, g_inv, np.sqrt(det)


def normal_frame(Fi: np.ndarray, n: int, tol: float = TOL_FRAME) -> np.ndarray:
    """Orthonormal normal frame by Gram-Schmidt of the ambient standard basis.

    Tangent vectors are orthonormalized first; then e_1, ..., e_d are taken in
    order and kept when their residual against the current basis exceeds
    ``tol``.  For codimension one the normal is oriented so that
    ``(-1)^(m+1) det[F_1, ..., F_m, nu] > 0``.
    """
    shape = Fi.shape[:-2]
    m, d = Fi.shape[-2:]
    T = Fi.reshape(-1, m, d)
    S = T.shape[0]
    basis = np.zeros((S, m + n, d))
    for i in range(m):
        v = T[:, i].copy()
        for _ in range(2):
            for k in range(i):
                v -= np.einsum("sd,sd->s", v, basis[:, k])[:, None] * basis[:, k]
        basis[:, i] = v / np.linalg.norm(v, axis=1)[:, None]
    count = np.zeros(S, dtype=int)
    rows = np.arange(S)
    for e in range(d):
        v = np.zeros((S, d))
        v[:, e] = 1.0
        for _ in range(2):
            # unfilled slots are zero vectors and contribute nothing
            v -= np.einsum("sk,skd->sd", np.einsum("sd,skd->sk", v, basis), basis)
        norm = np.linalg.norm(v, axis=1)
        take = (norm > tol) & (count < n)
        if np.any(take):
            basis[rows[take], m + count[take]] = v[take] / norm[take, None]
            count[take] += 1
    if np.any(count < n):
        idx = int(np.flatnonzero(count < n)[0])
        raise FrameFailure(f"normal frame rank-deficient at sample {idx}")
    frame = basis[:, m:]
    if n == 1:
        mat = np.concatenate([T, frame], axis=1)
        sign = np.sign(np.linalg.det(mat)) * (-1) ** (m + 1)
        sign[sign == 0] = 1.0
        frame = frame * sign[:, None, None]
    return frame.reshape(shape + (n, d))


def second_fundamental_form(Fij: np.ndarray, frame: np.ndarray) -> np.ndarray:
    """h_ij^alpha = <F_ij, nu_alpha>, symmetrized in (i, j)."""
    h = np.einsum("...ijd,...ad->...ija", Fij, frame)
    return 0.5 * (h + np.swapaxes(h, -3, -2))


def contract_sq(T: np.ndarray, g_inv: np.ndarray) -> np.ndarray:
    """|T|^2 = T_ij(.) T_kl(.) g^ik g^jl for (..., m, m[, n]) tensors."""
    if T.ndim == g_inv.ndim:
        return np.einsum("...ij,...kl,...ik,...jl->...", T, T, g_inv, g_inv)
    return np.einsum("...ija,...kla,...ik,...jl->...", T, T, g_inv, g_inv)


def mean_curvature_and_A(h: np.ndarray, g_inv: np.ndarray):
    """Return H^alpha, A_ij, |II|^2, |H|^2, |A|^2 and tr_g A."""
    H = np.einsum("...ij,...ija->...a", g_inv, h)
    A = np.einsum("...a,...ija->...ij", H, h)
    norm_II_sq = contract_sq(h, g_inv)
    norm_H_sq = np.einsum("...a,...a->...", H, H)
    norm_A_sq = contract_sq(A, g_inv)
    tr_A = np.einsum("...ij,...ij->...", g_inv, A)
    return H, A, norm_II_sq, norm_H_sq, norm_A_sq, tr_A


def gauss_scalar_curvature(norm_H_sq, norm_II_sq):
    """Twice-traced Gauss equation in flat space: R = |H|^2 - |II|^2."""
    return norm_H_sq - norm_II_sq


def norm_mask(imm: SampledImmersion, band: int = POLE_BAND) -> np.ndarray:
    """Samples that enter max-norms (pole bands of profiles are excluded)."""
    mask = np.ones(imm.grid_shape, dtype=bool)
    if imm.kind is Kind.ROTATIONAL_PROFILE:
        mask[:band] = False
        mask[-band:] = False
    elif imm.kind is Kind.DISC_GRAPH:
        mask &= imm.disc_mask()
    return mask


def geometry_from_derivatives(derivs: Derivatives, n: int, mask=None) -> GeometryField:
    g, g_inv, vol = induced_metric(derivs.Fi)
    frame = normal_frame(derivs.Fi, n)
    h = second_fundamental_form(derivs.Fij, frame)
    H, A, II2, H2, A2, trA = mean_curvature_and_A(h, g_inv)
    if mask is None:
        mask = np.ones(g.shape[:-2], dtype=bool)
    return GeometryField(g, g_inv, vol, frame, h, H, A, II2, H2, A2, trA,
                         gauss_scalar_curvature(H2, II2), mask)


def compute_geometry(imm: SampledImmersion, band: int = POLE_BAND) -> GeometryField:
    return geometry_from_derivatives(parameter_derivatives(imm), imm.n, norm_mask(imm, band))


def total_volume(imm: SampledImmersion, geom: GeometryField) -> float:
    """Intrinsic m-volume: length, or area of the full surface of revolution."""
    h = imm.spacing
    if imm.kind is Kind.CLOSED_CURVE:
        return float(h[0] * np.sum(geom.vol_density))
    if imm.kind is Kind.ROTATIONAL_PROFILE:
        # vol_density here is |F_u| * rho; trapezoid in u (endpoints vanish)
        dens = geom.vol_density.copy()
        dens[0] = dens[-1] = 0.0
        return float(2 * np.pi * h[0] * np.sum(dens))
    w = _trapezoid_weights(imm.grid_shape, h)
    return float(np.sum(w * geom.vol_density * imm.disc_mask()))


def _trapezoid_weights(shape, h):
    w = np.ones(shape)
    for ax, step in enumerate(h):
        idx = [slice(None)] * len(shape)
        for end in (0, -1):
            idx[ax] = end
            w[tuple(idx)] *= 0.5
        w *= step
    return w


# ---------------------------------------------------------------------------
# graph frame


@dataclass
class GraphData:
    """Graph x -> (x, psi(x)) over the disc D_r with exact polynomial derivatives."""

    x: np.ndarray       # (S, m) sample points
    psi: np.ndarray     # (S, n)
    D_psi: np.ndarray   # (S, n, m)
    D2_psi: np.ndarray  # (S, n, m, m)
    g_tan: np.ndarray   # (S, m, m)
    g_nor: np.ndarray   # (S, n, n)
    r: float
    alpha_bound: float

    @property
    def m(self):
        return self.x.shape[1]

    @property
    def n(self):
        return self.psi.shape[1]

    @classmethod
    def from_polynomial(cls, psi: PolynomialMap, radius: float = 1.0, samples: int = 64,
                        disc_only: bool = True) -> "GraphData":
        x1 = np.linspace(-radius, radius, samples)
        if psi.m == 1:
            x = x1[:, None]
        else:
            X, Y = np.meshgrid(x1, x1, indexing="ij")
            x = np.stack([X.ravel(), Y.ravel()], -1)
        if disc_only:
            x = x[np.einsum("si,si->s", x, x) <= radius * radius * (1 + 1e-12)]
        return cls.from_points(psi, x, radius)

    @classmethod
    def from_points(cls, psi: PolynomialMap, x, radius: float) -> "GraphData":
        x = np.atleast_2d(np.asarray(x, dtype=float))
        D = psi.jacobian(x)
        D2 = psi.hessian(x)
        g_tan = np.eye(psi.m) + np.einsum("sai,saj->sij", D, D)
        g_nor = np.eye(psi.n) + np.einsum("sai,sbi->sab", D, D)
        grad_sq = np.einsum("sai,sai->s", D, D)
        return cls(x, psi.value(x), D, D2, g_tan, g_nor, radius,
                   float(np.sqrt(grad_sq.max())) if len(grad_sq) else 0.0)

    @property
    def grad_sq(self):
        """|D psi|^2 per sample (Frobenius norm of the Jacobian)."""
        return np.einsum("sai,sai->s", self.D_psi, self.D_psi)

    @property
    def hess_sq(self):
        return np.einsum("saij,saij->s", self.D2_psi, self.D2_psi)

    def norm_II_sq(self):
        """|II|^2 = D^2psi_a D^2psi_b g_nor^ab g_tan^ik g_tan^jl."""
        gt = np.linalg.inv(self.g_tan)
        gn = np.linalg.inv(self.g_nor)
        return np.einsum("saij,sbkl,sab,sik,sjl->s", self.D2_psi, self.D2_psi, gn, gt, gt)

    def derivatives(self) -> Derivatives:
        """Parametrization derivatives of x -> (x, psi(x)) for the generic path."""
        S, m, n = self.x.shape[0], self.m, self.n
        Fi = np.zeros((S, m, m + n))
        Fi[:, :, :m] = np.eye(m)
        Fi[:, :, m:] = np.swapaxes(self.D_psi, 1, 2)
        Fij = np.zeros((S, m, m, m + n))
        Fij[..., m:] = np.moveaxis(self.D2_psi, 1, -1)
        return Derivatives(Fi, Fij)
