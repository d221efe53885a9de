"""Sampled immersions on structured parameter grids.

Three kinds are supported:

* ``ClosedCurve``: a periodic 1-D grid, positions in R^d (m = 1, n = d - 1).
* ``DiscGraph``: the graph x -> (x, psi(x)) sampled on a square grid covering
  the disc D_r^m (m = 1 or 2); boundary rows use one-sided differences.
* ``RotationalProfile``: a surface of revolution in R^3 (m = 2, n = 1) stored
  as its meridian profile (rho, z) on a 1-D grid that runs from the top pole
  (rho = 0) to the bottom pole (rho = 0).  The angular direction is handled
  exactly, never sampled.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from scipy.interpolate import CubicSpline


class Kind(str, Enum):
    CLOSED_CURVE = "ClosedCurve"
    DISC_GRAPH = "DiscGraph"
    ROTATIONAL_PROFILE = "RotationalProfile"


@dataclass
class SampledImmersion:
    """Discretized immersion F: M -> R^(m+n).

    ``params`` holds one coordinate array per grid axis, ``spacing`` the
    matching grid steps.  ``labels`` are material coordinates along the first
    grid axis (1-D kinds only); they equal ``params[0]`` until the sample
    points are redistributed along the submanifold.
    """

    kind: Kind
    m: int
    n: int
    params: tuple
    positions: np.ndarray
    spacing: tuple
    labels: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.kind = Kind(self.kind)
        self.positions = np.ascontiguousarray(self.positions, dtype=float)
        self.params = tuple(np.asarray(p, dtype=float) for p in self.params)
        self.spacing = tuple(float(h) for h in self.spacing)
        grid_shape = tuple(len(p) for p in self.params)
        if self.positions.shape[:-1] != grid_shape:
            raise ValueError(
                f"positions shape {self.positions.shape} does not match grid {grid_shape}"
            )
        if self.positions.shape[-1] != self.coord_dim:
            raise ValueError(
                f"{self.kind.value} expects {self.coord_dim} position components, "
                f"got {self.positions.shape[-1]}"
            )
        if len(self.spacing) != len(self.params):
            raise ValueError("one spacing per grid axis required")
        if self.kind is Kind.CLOSED_CURVE and grid_shape[0] < 8:
            raise ValueError("closed curves need at least 8 samples")
        if self.kind is Kind.ROTATIONAL_PROFILE:
            if self.m != 2 or self.n != 1:
                raise ValueError("rotational profiles are surfaces in R^3")
            if grid_shape[0] < 5:
                raise ValueError("rotational profiles need at least 5 samples")
            if abs(self.positions[0, 0]) > 1e-12 or abs(self.positions[-1, 0]) > 1e-12:
                raise ValueError("profile endpoints must lie on the rotation axis")
        if self.kind is Kind.DISC_GRAPH and len(grid_shape) != self.m:
            raise ValueError("disc graphs need one grid axis per intrinsic dimension")
        if self.labels is None and len(self.params) == 1:
            self.labels = self.params[0].copy()
        elif self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=float)

    @property
    def ambient_dim(self) -> int:
        return self.m + self.n

    @property
    def coord_dim(self) -> int:
        """Number of stored position components (2 for profiles)."""
        if self.kind is Kind.ROTATIONAL_PROFILE:
            return 2
        return self.m + self.n

    @property
    def grid_shape(self) -> tuple:
        return self.positions.shape[:-1]

    @property
    def num_samples(self) -> int:
        return int(np.prod(self.grid_shape))

    def copy(self) -> "SampledImmersion":
        return replace(
            self,
            positions=self.positions.copy(),
            labels=None if self.labels is None else self.labels.copy(),
            meta=dict(self.meta),
        )

    def with_positions(self, positions, labels=None) -> "SampledImmersion":
        return replace(
            self,
            positions=np.array(positions, dtype=float),
            labels=self.labels.copy() if labels is None and self.labels is not None else labels,
            meta=dict(self.meta),
        )

    def ambient_positions(self, theta: float = 0.0) -> np.ndarray:
        """Positions in R^(m+n); profiles are placed in the meridian plane ``theta``."""
        if self.kind is Kind.ROTATIONAL_PROFILE:
            rho, z = self.positions[:, 0], self.positions[:, 1]
            return np.stack([rho * np.cos(theta), rho * np.sin(theta), z], axis=-1)
        return self.positions

    def disc_mask(self) -> np.ndarray:
        """Samples whose graph coordinates lie in the closed disc D_r (graphs only)."""
        if self.kind is not Kind.DISC_GRAPH:
            return np.ones(self.grid_shape, dtype=bool)
        r = self.meta.get("radius", np.inf)
        x = self.positions[..., : self.m]
        return np.einsum("...i,...i->...", x, x) <= r * r * (1 + 1e-12)


# ---------------------------------------------------------------------------
# closed curves


def circle(radius: float = 1.0, samples: int = 512, *, arclength: bool = False,
           center=(0.0, 0.0)) -> SampledImmersion:
    """Counter-clockwise circle; ``arclength=True`` uses s in [0, 2 pi r)."""
    theta = 2 * np.pi * np.arange(samples) / samples
    pos = np.stack([center[0] + radius * np.cos(theta), center[1] + radius * np.sin(theta)], -1)
    u = radius * theta if arclength else theta
    h = (2 * np.pi * radius if arclength else 2 * np.pi) / samples
    return SampledImmersion(Kind.CLOSED_CURVE, 1, 1, (u,), pos, (h,),
                            meta={"shape": "circle", "radius": radius, "period": samples * h})


def ellipse(a: float = 2.0, b: float = 1.0, samples: int = 512) -> SampledImmersion:
    theta = 2 * np.pi * np.arange(samples) / samples
    pos = np.stack([a * np.cos(theta), b * np.sin(theta)], -1)
    return SampledImmersion(Kind.CLOSED_CURVE, 1, 1, (theta,), pos, (2 * np.pi / samples,),
                            meta={"shape": "ellipse", "a": a, "b": b, "period": 2 * np.pi})


SPACE_CURVES = ("trefoil", "viviani", "tilted_circle")


def space_curve(preset: str = "trefoil", samples: int = 512) -> SampledImmersion:
    """Closed curves in R^3 (codimension two)."""
    t = 2 * np.pi * np.arange(samples) / samples
    if preset == "trefoil":
        pos = np.stack([(2 + np.cos(3 * t)) * np.cos(2 * t),
                        (2 + np.cos(3 * t)) * np.sin(2 * t),
                        np.sin(3 * t)], -1)
    elif preset == "viviani":
        # Viviani's curve with the parameter doubled so the period is 2 pi.
        pos = np.stack([1 + np.cos(2 * t), np.sin(2 * t), 2 * np.sin(t)], -1)
    elif preset == "tilted_circle":
        c, s = np.cos(t), np.sin(t)
        tilt = 0.6
        pos = np.stack([c, s * np.cos(tilt), s * np.sin(tilt)], -1)
    else:
        raise ValueError(f"unknown space curve preset {preset!r}; choose from {SPACE_CURVES}")
    return SampledImmersion(Kind.CLOSED_CURVE, 1, 2, (t,), pos, (2 * np.pi / samples,),
                            meta={"shape": "space_curve", "preset": preset, "period": 2 * np.pi})


# ---------------------------------------------------------------------------
# surfaces of revolution


def sphere(radius: float = 1.0, samples: int = 129) -> SampledImmersion:
    """Round sphere as a profile u in [0, pi] -> (r sin u, r cos u)."""
    u = np.linspace(0.0, np.pi, samples)
    pos = np.stack([radius * np.sin(u), radius * np.cos(u)], -1)
    pos[0, 0] = pos[-1, 0] = 0.0
    return SampledImmersion(Kind.ROTATIONAL_PROFILE, 2, 1, (u,), pos, (u[1] - u[0],),
                            meta={"shape": "sphere", "radius": radius})


@dataclass(frozen=True)
class DumbbellProfile:
    """Meridian of a dumbbell: two spherical bells joined by a cosh neck.

    Upper half, z >= 0 (the lower half is the mirror image):

    * neck,  0 <= z <= z1:      rho = neck_r * cosh(z / lam),  z1 = lam = neck_len / 4
    * blend, z1 <= z <= z2:     quintic Hermite polynomial matching value, slope
                                and second derivative at both ends (C^2 gluing)
    * bell,  z >= z2:           circle of radius bell_r centred at (0, c),
                                z2 = neck_len / 2, c = z2 + 0.8 * bell_r

    so the bell meets the blend where rho = 0.6 * bell_r.
    """

    bell_r: float = 1.0
    neck_r: float = 0.2
    neck_len: float = 1.0

    @property
    def lam(self):
        return self.neck_len / 4

    @property
    def z1(self):
        return self.neck_len / 4

    @property
    def z2(self):
        return self.neck_len / 2

    @property
    def center(self):
        return self.z2 + 0.8 * self.bell_r

    @property
    def top(self):
        return self.center + self.bell_r

    def _neck(self, z):
        x = z / self.lam
        r = self.neck_r
        return r * np.cosh(x), r * np.sinh(x) / self.lam, r * np.cosh(x) / self.lam ** 2

    def _bell(self, z):
        d = self.center - z
        s = np.sqrt(self.bell_r ** 2 - d ** 2)
        return s, d / s, -self.bell_r ** 2 / s ** 3

    def _blend_coefficients(self):
        z1, z2 = self.z1, self.z2
        f0, d0, s0 = self._neck(z1)
        f1, d1, s1 = self._bell(z2)
        w = z2 - z1
        # quintic in x = (z - z1) / w with value/slope/curvature matching
        rows = []
        rhs = []
        for x, (f, d, s) in ((0.0, (f0, d0 * w, s0 * w * w)), (1.0, (f1, d1 * w, s1 * w * w))):
            rows.append([x ** k for k in range(6)])
            rows.append([k * x ** (k - 1) if k >= 1 else 0.0 for k in range(6)])
            rows.append([k * (k - 1) * x ** (k - 2) if k >= 2 else 0.0 for k in range(6)])
            rhs.extend([f, d, s])
        return np.linalg.solve(np.array(rows), np.array(rhs))

    def point(self, tau):
        """Exact profile point for a global parameter tau in [0, 1] (top pole to bottom pole)."""
        tau = np.asarray(tau, dtype=float)
        # tau in [0, 1/2] covers the upper half from the top pole to z = 0.
        upper = tau <= 0.5
        sigma = np.where(upper, tau, 1.0 - tau) * 2.0  # 0 at a pole, 1 at z = 0
        rho = np.empty_like(sigma)
        z = np.empty_like(sigma)
        # sigma in [0, 1/3]: bell, angle from the pole down to the junction
        om2 = np.arccos(0.8)
        coef = self._blend_coefficients()
        bell = sigma <= 1 / 3
        om = np.pi - (np.pi - om2) * (sigma[bell] * 3.0)
        rho[bell] = self.bell_r * np.sin(om)
        z[bell] = self.center - self.bell_r * np.cos(om)
        blend = (sigma > 1 / 3) & (sigma <= 2 / 3)
        zz = self.z2 - (self.z2 - self.z1) * (sigma[blend] * 3.0 - 1.0)
        x = (zz - self.z1) / (self.z2 - self.z1)
        rho[blend] = sum(c * x ** k for k, c in enumerate(coef))
        z[blend] = zz
        neck = sigma > 2 / 3
        zz = self.z1 * (1.0 - (sigma[neck] * 3.0 - 2.0))
        rho[neck] = self._neck(zz)[0]
        z[neck] = zz
        z = np.where(upper, z, -z)
        return np.stack([rho, z], -1)

    def sample(self, samples: int) -> np.ndarray:
        """``samples`` exact profile points equally spaced in arc length."""
        tau = np.linspace(0.0, 1.0, 400_001)
        pts = self.point(tau)
        seg = np.hypot(*np.diff(pts, axis=0).T)
        s = np.concatenate([[0.0], np.cumsum(seg)])
        target = np.linspace(0.0, s[-1], samples)
        tau_t = np.interp(target, s, tau)
        out = self.point(tau_t)
        out[0] = (0.0, self.top)
        out[-1] = (0.0, -self.top)
        return out


def dumbbell(bell_r: float = 1.0, neck_r: float = 0.2, neck_len: float = 1.0,
             samples: int = 601) -> SampledImmersion:
    prof = DumbbellProfile(bell_r, neck_r, neck_len)
    pos = prof.sample(samples)
    u = np.linspace(0.0, 1.0, samples)
    return SampledImmersion(Kind.ROTATIONAL_PROFILE, 2, 1, (u,), pos, (u[1] - u[0],),
                            meta={"shape": "dumbbell", "bell_r": bell_r, "neck_r": neck_r,
                                  "neck_len": neck_len})


def profile_spline(imm: SampledImmersion, ghosts: int = 6):
    """Cubic spline (rho, z)(u) through a profile, extended past both poles.

    Beyond a pole the profile is reflected (rho odd, z even), which is the
    smooth continuation of a surface of revolution through its axis.
    """
    u = imm.params[0]
    pos = imm.positions
    k = min(ghosts, len(u) - 1)
    top = pos[1:k + 1][::-1] * np.array([-1.0, 1.0])
    bot = pos[-k - 1:-1][::-1] * np.array([-1.0, 1.0])
    u_top = 2 * u[0] - u[1:k + 1][::-1]
    u_bot = 2 * u[-1] - u[-k - 1:-1][::-1]
    uu = np.concatenate([u_top, u, u_bot])
    pp = np.concatenate([top, pos, bot])
    return CubicSpline(uu, pp, axis=0)


# ---------------------------------------------------------------------------
# polynomial graphs


@dataclass(frozen=True)
class PolynomialMap:
    """psi: R^m -> R^n, each component a polynomial sum_k c_k x^e_k."""

    m: int
    n: int
    exponents: tuple  # tuple of m-tuples
    coeffs: np.ndarray  # (n, len(exponents))

    @classmethod
    def random(cls, m: int, n: int, degree: int, rng: np.random.Generator,
               scale: float = 1.0, zero_jet: bool = False) -> "PolynomialMap":
        exps = [e for e in _exponents(m, degree) if not zero_jet or sum(e) >= 2]
        coeffs = scale * rng.standard_normal((n, len(exps)))
        return cls(m, n, tuple(exps), coeffs)

    @classmethod
    def from_terms(cls, m: int, terms: list) -> "PolynomialMap":
        """``terms`` is a list (one per component) of {exponent tuple: coefficient}."""
        exps = sorted({e for comp in terms for e in comp})
        coeffs = np.array([[comp.get(e, 0.0) for e in exps] for comp in terms])
        return cls(m, len(terms), tuple(exps), coeffs)

    def _monomials(self, x, d):
        """Partial derivative ``d`` (an m-tuple) of every monomial at points x (S, m)."""
        out = np.ones((x.shape[0], len(self.exponents)))
        for k, e in enumerate(self.exponents):
            for i in range(self.m):
                p = e[i] - d[i]
                if p < 0:
                    out[:, k] = 0.0
                    break
                fac = 1.0
                for j in range(d[i]):
                    fac *= e[i] - j
                out[:, k] *= fac * x[:, i] ** p
        return out

    def value(self, x):
        x = np.atleast_2d(x)
        return self._monomials(x, (0,) * self.m) @ self.coeffs.T

    def jacobian(self, x):
        """(S, n, m) with entries d psi_alpha / d x_i."""
        x = np.atleast_2d(x)
        cols = []
        for i in range(self.m):
            d = tuple(1 if j == i else 0 for j in range(self.m))
            cols.append(self._monomials(x, d) @ self.coeffs.T)
        return np.stack(cols, axis=-1)

    def hessian(self, x):
        """(S, n, m, m) with entries d^2 psi_alpha / d x_i d x_j."""
        x = np.atleast_2d(x)
        out = np.empty((x.shape[0], self.n, self.m, self.m))
        for i in range(self.m):
            for j in range(i, self.m):
                d = [0] * self.m
                d[i] += 1
                d[j] += 1
                val = self._monomials(x, tuple(d)) @ self.coeffs.T
                out[:, :, i, j] = val
                out[:, :, j, i] = val
        return out


def _exponents(m, degree):
    if m == 1:
        return [(k,) for k in range(degree + 1)]
    return [(a, b) for total in range(degree + 1) for a in range(total, -1, -1)
            for b in [total - a]]


def graph_immersion(psi: PolynomialMap, radius: float = 1.0, samples: int = 64) -> SampledImmersion:
    """Sample the graph of ``psi`` on the square grid [-r, r]^m."""
    x = np.linspace(-radius, radius, samples)
    h = x[1] - x[0]
    if psi.m == 1:
        pts = x[:, None]
        grid = (x,)
    else:
        X, Y = np.meshgrid(x, x, indexing="ij")
        pts = np.stack([X.ravel(), Y.ravel()], -1)
        grid = (x, x)
    vals = psi.value(pts)
    pos = np.concatenate([pts, vals], axis=-1).reshape(tuple(len(g) for g in grid) + (psi.m + psi.n,))
    return SampledImmersion(Kind.DISC_GRAPH, psi.m, psi.n, grid, pos, (h,) * psi.m,
                            meta={"shape": "graph", "radius": radius})
