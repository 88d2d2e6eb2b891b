"""Finite restart measures and their Laplace exponents.

A restart measure mu is a finite positive measure on (a subset of) the
domain interior; its total mass kappa = mu(D) sets the restart rate in
local time, and mu/kappa is the distribution of restart points.  All kinds
expose the same operations: total_mass, sample (distribution mu/kappa) and
integrate (integral of a test function against mu, including the mass).

Atomic kinds integrate exactly; continuous kinds use doubling Gauss-
Legendre panels (periodic trapezoid in the angle for balls) with an
explicit convergence gate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# support must sit strictly inside the simulation domain
SUPPORT_MARGIN = 1e-9
INTEGRATE_RTOL = 1e-8


class UnsupportedDomain(Exception):
    """Measure support is not strictly inside the proposed domain."""


class QuadratureNotConverged(Exception):
    """Doubling quadrature failed to reach the requested tolerance."""

    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


def _gauss_nodes(a, b, n):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (a + b), 0.5 * (b - a) * w


def _converge(levels, rtol, what, floor=0.0):
    """First value whose refinement step falls below rtol * max(|val|, floor)."""
    prev = None
    for val in levels:
        if prev is not None and abs(val - prev) <= rtol * max(abs(val), floor, 1e-300):
            return val
        prev = val
    raise QuadratureNotConverged(f"{what} did not converge to rtol={rtol}", estimate=prev)


class RestartMeasure:
    kind = "abstract"

    @property
    def total_mass(self):
        raise NotImplementedError

    @property
    def dimension(self):
        raise NotImplementedError

    def sample(self, rng, size=None):
        """Draw from mu / total_mass."""
        raise NotImplementedError

    def integrate(self, g, rtol=INTEGRATE_RTOL, floor=0.0):
        """Integral of g against mu (mass included).

        g must accept an (n,) array for 1-d measures or an (n, 2) array for
        2-d ones and return an (n,) array.  `floor` sets the scale below
        which rtol is read as an absolute tolerance (near-zero integrals of
        oscillatory g can never meet a purely relative target).
        """
        raise NotImplementedError

    def support_points(self):
        """(points, radii): support is contained in balls B(p_i, r_i)."""
        raise NotImplementedError

    def cdf(self, x):
        """CDF of the normalized distribution mu/kappa (1-d kinds only)."""
        raise NotImplementedError

    def validate_support(self, domain):
        """Raise UnsupportedDomain unless the support sits strictly inside.

        Uses the 1-Lipschitz bound sd(x) <= sd(center) + radius for ball-
        shaped supports, so the check is conservative but never wrong.
        """
        pts, radii = self.support_points()
        for p, r in zip(pts, radii):
            sd = domain.signed_distance(p)
            if sd + r >= -SUPPORT_MARGIN:
                raise UnsupportedDomain(
                    f"{self.kind} support within {sd + r:.2e} of the boundary: "
                    "support must be interior"
                )


def _check_weight(w):
    w = float(w)
    if not w > 0:
        raise ValueError("weight must be positive")
    return w


def _point_dim(p):
    arr = np.asarray(p, dtype=float)
    if arr.ndim == 0:
        return float(arr), 1
    if arr.shape == (2,):
        return tuple(arr), 2
    raise ValueError("points must be scalars or 2-d")


@dataclass(frozen=True)
class PointMass(RestartMeasure):
    point: object
    weight: float = 1.0
    kind = "point_mass"

    def __post_init__(self):
        p, d = _point_dim(self.point)
        object.__setattr__(self, "point", p)
        object.__setattr__(self, "weight", _check_weight(self.weight))
        object.__setattr__(self, "_dim", d)

    @property
    def total_mass(self):
        return self.weight

    @property
    def dimension(self):
        return self._dim

    def sample(self, rng, size=None):
        p = np.asarray(self.point, dtype=float)
        if size is None:
            return float(p) if self._dim == 1 else p.copy()
        shape = (size,) if self._dim == 1 else (size, 2)
        return np.broadcast_to(p, shape).copy()

    def integrate(self, g, rtol=INTEGRATE_RTOL, floor=0.0):
        x = np.asarray([self.point], dtype=float)
        return self.weight * float(np.asarray(g(x)).reshape(-1)[0])

    def support_points(self):
        return [self.point], [0.0]

    def cdf(self, x):
        if self._dim != 1:
            raise UnsupportedDomain("cdf is defined for 1-d measures only")
        return (np.asarray(x, dtype=float) >= self.point).astype(float)


@dataclass(frozen=True)
class FiniteMixtureOfPointMasses(RestartMeasure):
    points: tuple
    weights: tuple
    kind = "mixture"

    def __post_init__(self):
        pts = [_point_dim(p) for p in self.points]
        dims = {d for _, d in pts}
        if len(dims) != 1:
            raise ValueError("mixed dimensions in mixture atoms")
        ws = tuple(_check_weight(w) for w in self.weights)
        if len(ws) != len(pts):
            raise ValueError("points and weights must have equal length")
        object.__setattr__(self, "points", tuple(p for p, _ in pts))
        object.__setattr__(self, "weights", ws)
        object.__setattr__(self, "_dim", dims.pop())

    @property
    def total_mass(self):
        return float(sum(self.weights))

    @property
    def dimension(self):
        return self._dim

    def _atoms(self):
        return np.asarray(self.points, dtype=float)

    def sample(self, rng, size=None):
        p = np.asarray(self.weights) / self.total_mass
        idx = rng.choice(len(self.points), size=size if size is not None else 1, p=p)
        atoms = self._atoms()
        out = atoms[idx]
        if size is None:
            return float(out[0]) if self._dim == 1 else out[0]
        return out

    def integrate(self, g, rtol=INTEGRATE_RTOL, floor=0.0):
        vals = np.asarray(g(self._atoms()), dtype=float)
        return float(np.dot(np.asarray(self.weights), vals))

    def support_points(self):
        return list(self.points), [0.0] * len(self.points)

    def cdf(self, x):
        if self._dim != 1:
            raise UnsupportedDomain("cdf is defined for 1-d measures only")
        x = np.asarray(x, dtype=float)[..., None]
        w = np.asarray(self.weights) / self.total_mass
        return (x >= self._atoms()).astype(float) @ w


@dataclass(frozen=True)
class UniformOnBall(RestartMeasure):
    center: object
    radius: float
    weight: float = 1.0
    kind = "uniform_ball"

    def __post_init__(self):
        c, d = _point_dim(self.center)
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "weight", _check_weight(self.weight))
        object.__setattr__(self, "_dim", d)

    @property
    def total_mass(self):
        return self.weight

    @property
    def dimension(self):
        return self._dim

    def sample(self, rng, size=None):
        n = 1 if size is None else size
        if self._dim == 1:
            out = rng.uniform(self.center - self.radius, self.center + self.radius, n)
            return float(out[0]) if size is None else out
        r = self.radius * np.sqrt(rng.uniform(0.0, 1.0, n))
        th = rng.uniform(0.0, 2 * math.pi, n)
        out = np.column_stack([r * np.cos(th), r * np.sin(th)]) + np.asarray(self.center)
        return out[0] if size is None else out

    def integrate(self, g, rtol=INTEGRATE_RTOL, floor=0.0):
        if self._dim == 1:
            a, b = self.center - self.radius, self.center + self.radius

            def level(n):
                x, w = _gauss_nodes(a, b, n)
                return float(np.dot(w, np.asarray(g(x)))) / (b - a)

            mean = _converge(
                (level(n) for n in (16, 32, 64, 128, 256)), rtol, "ball average", floor
            )
            return self.weight * mean
        c = np.asarray(self.center)

        def level(n):
            r, wr = _gauss_nodes(0.0, self.radius, n)
            th = np.linspace(0.0, 2 * math.pi, 2 * n, endpoint=False)
            R, T = np.meshgrid(r, th, indexing="ij")
            pts = np.column_stack([(R * np.cos(T)).ravel(), (R * np.sin(T)).ravel()]) + c
            vals = np.asarray(g(pts)).reshape(n, 2 * n)
            ang_mean = vals.mean(axis=1)
            return 2.0 * float(np.dot(wr, r * ang_mean)) / self.radius**2

        mean = _converge(
            (level(n) for n in (16, 32, 64, 128, 256)), rtol, "ball average", floor
        )
        return self.weight * mean

    def support_points(self):
        return [self.center], [self.radius]

    def cdf(self, x):
        if self._dim != 1:
            raise UnsupportedDomain("cdf is defined for 1-d measures only")
        a = self.center - self.radius
        return np.clip((np.asarray(x, dtype=float) - a) / (2 * self.radius), 0.0, 1.0)


@dataclass(frozen=True)
class TruncatedGaussian(RestartMeasure):
    """Gaussian N(center, sigma^2 I) conditioned on a truncation region.

    The truncation region is itself a Domain (Interval or Disk) and must be
    strictly inside the simulation domain; total mass is `weight`.
    """

    center: object
    sigma: float
    domain: object
    weight: float = 1.0
    kind = "truncated_gaussian"

    def __post_init__(self):
        c, d = _point_dim(self.center)
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if d != getattr(self.domain, "dimension", None):
            raise ValueError("center and truncation domain dimensions differ")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "weight", _check_weight(self.weight))
        object.__setattr__(self, "_dim", d)

    @property
    def total_mass(self):
        return self.weight

    @property
    def dimension(self):
        return self._dim

    def _density_unnorm(self, pts):
        c = np.asarray(self.center)
        if self._dim == 1:
            z2 = (pts - c) ** 2
        else:
            z2 = ((pts - c) ** 2).sum(axis=1)
        return np.exp(-0.5 * z2 / self.sigma**2)

    def _region_quad(self, h, rtol, what, floor=0.0):
        dom = self.domain
        if self._dim == 1:

            def level(n):
                x, w = _gauss_nodes(dom.a, dom.b, n)
                return float(np.dot(w, np.asarray(h(x))))

        else:

            def level(n):
                r, wr = _gauss_nodes(0.0, dom.radius, n)
                th = np.linspace(0.0, 2 * math.pi, 2 * n, endpoint=False)
                R, T = np.meshgrid(r, th, indexing="ij")
                pts = np.column_stack(
                    [(R * np.cos(T)).ravel(), (R * np.sin(T)).ravel()]
                ) + np.asarray(dom.center)
                vals = np.asarray(h(pts)).reshape(n, 2 * n)
                dth = 2 * math.pi / (2 * n)
                return float(np.dot(wr, r * vals.sum(axis=1))) * dth

        return _converge((level(n) for n in (16, 32, 64, 128, 256)), rtol, what, floor)

    def integrate(self, g, rtol=INTEGRATE_RTOL, floor=0.0):
        from .geometry import Disk, Interval

        if not isinstance(self.domain, (Interval, Disk)):
            raise UnsupportedDomain("truncation region must be an Interval or a Disk")
        num = self._region_quad(
            lambda x: np.asarray(g(x)) * self._density_unnorm(x),
            rtol,
            "truncated moment",
            floor,
        )
        den = self._region_quad(self._density_unnorm, rtol, "truncation mass")
        return self.weight * num / den

    def sample(self, rng, size=None):
        n = 1 if size is None else size
        c = np.asarray(self.center, dtype=float)
        out = np.empty(n) if self._dim == 1 else np.empty((n, 2))
        filled = 0
        while filled < n:
            m = max(64, 2 * (n - filled))
            draw = c + self.sigma * rng.standard_normal(m if self._dim == 1 else (m, 2))
            good = draw[self.domain.signed_block(draw) <= 0.0]
            take = min(len(good), n - filled)
            out[filled : filled + take] = good[:take]
            filled += take
        if size is None:
            return float(out[0]) if self._dim == 1 else out[0]
        return out

    def support_points(self):
        dom = self.domain
        if self._dim == 1:
            mid = 0.5 * (dom.a + dom.b)
            return [mid], [0.5 * (dom.b - dom.a)]
        return [dom.center], [dom.radius]

    def cdf(self, x):
        if self._dim != 1:
            raise UnsupportedDomain("cdf is defined for 1-d measures only")
        from scipy.special import ndtr

        a, b = self.domain.a, self.domain.b
        za = ndtr((a - self.center) / self.sigma)
        zb = ndtr((b - self.center) / self.sigma)
        x = np.clip(np.asarray(x, dtype=float), a, b)
        return (ndtr((x - self.center) / self.sigma) - za) / (zb - za)


@dataclass(frozen=True)
class DensityOnGrid(RestartMeasure):
    """Discrete approximation: atoms at grid nodes carrying given weights."""

    grid: tuple
    weights: tuple
    kind = "density_grid"

    def __post_init__(self):
        pts = [_point_dim(p) for p in self.grid]
        dims = {d for _, d in pts}
        if len(dims) != 1:
            raise ValueError("mixed dimensions in grid nodes")
        ws = tuple(_check_weight(w) for w in self.weights)
        if len(ws) != len(pts):
            raise ValueError("grid and weights must have equal length")
        object.__setattr__(self, "grid", tuple(p for p, _ in pts))
        object.__setattr__(self, "weights", ws)
        object.__setattr__(self, "_dim", dims.pop())

    @property
    def total_mass(self):
        return float(sum(self.weights))

    @property
    def dimension(self):
        return self._dim

    def sample(self, rng, size=None):
        p = np.asarray(self.weights) / self.total_mass
        idx = rng.choice(len(self.grid), size=size if size is not None else 1, p=p)
        atoms = np.asarray(self.grid, dtype=float)
        out = atoms[idx]
        if size is None:
            return float(out[0]) if self._dim == 1 else out[0]
        return out

    def integrate(self, g, rtol=INTEGRATE_RTOL, floor=0.0):
        vals = np.asarray(g(np.asarray(self.grid, dtype=float)), dtype=float)
        return float(np.dot(np.asarray(self.weights), vals))

    def support_points(self):
        return list(self.grid), [0.0] * len(self.grid)

    def cdf(self, x):
        if self._dim != 1:
            raise UnsupportedDomain("cdf is defined for 1-d measures only")
        x = np.asarray(x, dtype=float)[..., None]
        w = np.asarray(self.weights) / self.total_mass
        return (x >= np.asarray(self.grid, dtype=float)).astype(float) @ w


@dataclass(frozen=True)
class LaplaceExponent:
    """Levy exponent of drift 1 plus compound jumps from a half-line measure.

    Phi(lam) = lam + integral of (1 - exp(-lam z)) d mu(z), so Phi(0) = 0 and
    Phi(lam)/lam -> 1 as lam -> infinity for finite mu.
    """

    measure: RestartMeasure
    drift: float = 1.0

    def __post_init__(self):
        if self.measure.dimension != 1:
            raise UnsupportedDomain("Laplace exponents need a half-line measure")
        pts, radii = self.measure.support_points()
        for p, r in zip(pts, radii):
            if p - r <= SUPPORT_MARGIN:
                raise UnsupportedDomain("measure support must be strictly positive")

    def __call__(self, lam, rtol=1e-10):
        lam = float(lam)
        if lam == 0.0:
            return 0.0
        jumps = self.measure.integrate(lambda z: -np.expm1(-lam * z), rtol=rtol)
        return self.drift * lam + jumps


def sample_restart(measure, rng, size=None, domain=None):
    """Draw restart points Z ~ mu/kappa; validates support when domain given."""
    if domain is not None:
        measure.validate_support(domain)
    return measure.sample(rng, size)


def integrate(measure, g, rtol=INTEGRATE_RTOL, floor=0.0):
    return measure.integrate(g, rtol=rtol, floor=floor)


def laplace_exponent(phi, lam, rtol=1e-10):
    return phi(lam, rtol=rtol)
