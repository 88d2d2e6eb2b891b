"""Invariant density of the restart process on the unit interval.

The elastic Green function on (0,1) is piecewise linear in each argument,
built from the homogeneous Robin solutions u_L(y) = 1 + kappa y and
u_R(y) = 1 + kappa (1 - y).  The invariant density is proportional to
phi(y) = int G(x,y) mu(dx); its boundary values always satisfy
phi(0) + phi(1) = 2 once mu has total mass kappa, and int (1/2) f'' dpi
vanishes for every f meeting the nonlocal Robin condition at both ends.

All integrals against mu reduce to either closed forms or quadrature of
smooth integrands: kernels with kinks are paired with mu through its CDF
(Stieltjes integration by parts), never through adaptive quadrature.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import Polynomial

from .geometry import Interval
from .sde import boundary_condition_residual

BOUNDARY_GATE = 1e-8
# atoms closer than this to each other or to a grid node are not resolved
ATOM_EPS = 1e-9

_GL3_NODES, _GL3_WEIGHTS = np.polynomial.legendre.leggauss(3)


class OutOfDomain(Exception):
    """Green function arguments outside the closed unit interval."""


class SuiteMemberNotInDomain(Exception):
    """A test function fails the nonlocal Robin boundary condition."""


def green_interval(kappa, x, y):
    """G(x,y) = 2 u_L(x ^ y) u_R(x v y) / (kappa (2 + kappa)).

    Symmetric, piecewise linear, derivative jump -2 across the diagonal and
    Robin residual zero at both endpoints, all by construction.
    """
    if kappa <= 0:
        raise ValueError("need kappa > 0")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(x < 0) or np.any(x > 1) or np.any(y < 0) or np.any(y > 1):
        raise OutOfDomain("green_interval needs x, y in [0, 1]")
    lo = np.minimum(x, y)
    hi = np.maximum(x, y)
    val = 2.0 * (1.0 + kappa * lo) * (1.0 + kappa * (1.0 - hi)) / (kappa * (2.0 + kappa))
    return float(val) if val.ndim == 0 else val


@dataclass(frozen=True)
class GreenFunction:
    domain: Interval
    kappa: float

    def __call__(self, x, y):
        return green_interval(self.kappa, x, y)


@dataclass(frozen=True)
class InvariantDensity:
    grid: np.ndarray
    phi: np.ndarray
    Z: float
    kappa: float
    cum_phi: np.ndarray = field(repr=False)  # Simpson cumulative of phi
    pi: np.ndarray = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "pi", self.phi / self.Z)

    def cdf(self, x):
        """CDF of pi, linearly interpolated between grid nodes.

        Node values come from per-cell Simpson with midpoint evaluations of
        phi, exact for the piecewise-quadratic phi of atomic and uniform mu;
        cdf(1.0) therefore cross-checks the closed-form normalization Z.
        """
        return np.interp(
            np.asarray(x, dtype=float), self.grid, self.cum_phi / self.Z
        )


def _check_measure(measure, kappa):
    if measure.dimension != 1:
        raise ValueError("invariant density is computed on the interval only")
    if abs(measure.total_mass - kappa) > 1e-9 * max(1.0, kappa):
        raise ValueError(
            f"kappa={kappa} must equal the measure total mass {measure.total_mass}"
        )
    measure.validate_support(Interval(0.0, 1.0))


def _breakpoints(measure):
    pts, radii = measure.support_points()
    out = []
    for p, r in zip(pts, radii):
        if r == 0.0:
            out.append(float(p))
        else:
            out.extend((float(p - r), float(p + r)))
    return out


def _atom_masses(measure, ys):
    """Mass of mu at each y (0 where y is not an atom), via CDF jumps."""
    ys = np.asarray(ys, dtype=float)
    jump = measure.cdf(ys) - measure.cdf(ys - ATOM_EPS)
    return measure.total_mass * np.where(jump > 1e-15, jump, 0.0)


def _tail_cdf_integrals(measure, grid):
    """I(y_i) = int_{y_i}^1 F(x) dx with F = mu([0, x]), per-cell 3-point Gauss."""
    a, b = grid[:-1], grid[1:]
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    nodes = mid[:, None] + half[:, None] * _GL3_NODES
    F = measure.total_mass * measure.cdf(nodes.ravel()).reshape(nodes.shape)
    cell = (F * _GL3_WEIGHTS).sum(axis=1) * half
    tail = np.concatenate([np.cumsum(cell[::-1])[::-1], [0.0]])
    return tail


def _phi_values(measure, kappa, ys):
    # Stieltjes by parts: for v with constant slope s on the support,
    #   int_{[y,1]} v dmu = v(1) F(1) - v(y) F(y-) - s int_y^1 F dx,
    # which needs no quadrature against the kinked kernel itself.
    F_left = measure.total_mass * measure.cdf(ys) - _atom_masses(measure, ys)
    I_tail = _tail_cdf_integrals(measure, ys)
    uL = 1.0 + kappa * ys
    uR = 1.0 + kappa * (1.0 - ys)
    F1 = measure.total_mass
    tail_L = uL[-1] * F1 - uL * F_left - kappa * I_tail
    tail_R = uR[-1] * F1 - uR * F_left + kappa * I_tail
    total_L = tail_L[0]  # F(0-) = 0, so the tail from 0 is the full integral
    head_L = total_L - tail_L
    return 2.0 * (uR * head_L + uL * tail_R) / (kappa * (2.0 + kappa))


def invariant_density(measure, kappa, grid=None):
    """phi(y) = int G(x,y) mu(dx) on a kink-aware grid, normalized to pi.

    The returned grid is the union of the requested (or default 2001-point)
    grid with the kinks of phi: atoms and support edges of mu.
    """
    _check_measure(measure, kappa)
    base = np.linspace(0.0, 1.0, 2001) if grid is None else np.asarray(grid, float)
    ys = np.unique(np.concatenate([base, [0.0, 1.0], _breakpoints(measure)]))
    if np.any(ys < 0) or np.any(ys > 1):
        raise OutOfDomain("grid must lie inside [0, 1]")
    # evaluate nodes and cell midpoints in one interleaved pass so the CDF
    # integrals never cross an atom inside a quadrature cell
    ys_all = np.empty(2 * len(ys) - 1)
    ys_all[0::2] = ys
    ys_all[1::2] = 0.5 * (ys[:-1] + ys[1:])
    phi_all = _phi_values(measure, kappa, ys_all)
    phi = phi_all[0::2]
    phi_mid = phi_all[1::2]
    cells = np.diff(ys) / 6.0 * (phi[:-1] + 4.0 * phi_mid + phi[1:])
    cum_phi = np.concatenate([[0.0], np.cumsum(cells)])

    # Z = int phi dy = int q dmu with q(x) = int_0^1 G(x,y) dy, a smooth
    # quadratic, so adaptive quadrature converges immediately
    def q(x):
        x = np.asarray(x, dtype=float)
        return (
            2.0
            * (
                (1.0 + kappa * (1.0 - x)) * (x + 0.5 * kappa * x**2)
                + (1.0 + kappa * x) * ((1.0 - x) + 0.5 * kappa * (1.0 - x) ** 2)
            )
            / (kappa * (2.0 + kappa))
        )

    Z = measure.integrate(q, floor=1.0)
    return InvariantDensity(ys, phi, float(Z), float(kappa), cum_phi)


def s_identity(measure, kappa):
    """phi(0) + phi(1); equals 2 whenever mu has total mass kappa."""
    _check_measure(measure, kappa)
    g = lambda x: green_interval(kappa, x, 0.0) + green_interval(kappa, x, 1.0)
    return measure.integrate(g, floor=1.0)


# ----------------------------------------------------------------- D(A) suite


@dataclass(frozen=True)
class SuiteMember:
    """Polynomial test function with vectorized value/gradient/Laplacian."""

    poly: Polynomial
    label: str

    def f(self, x):
        return self.poly(np.asarray(x, dtype=float))

    def df(self, x):
        return self.poly.deriv()(np.asarray(x, dtype=float))

    def half_laplacian(self, x):
        return 0.5 * self.poly.deriv(2)(np.asarray(x, dtype=float))


def _residual_pair(poly, measure, kappa):
    f = lambda x: poly(np.asarray(x, dtype=float))
    df = lambda x: poly.deriv()(np.asarray(x, dtype=float))
    dom = Interval(0.0, 1.0)
    return (
        boundary_condition_residual((f, df), dom, measure, 0.0),
        boundary_condition_residual((f, df), dom, measure, 1.0),
    )


def domain_suite(measure, kappa, degrees=(2, 3, 4, 5, 6)):
    """Monomials y^k corrected into the generator domain.

    Corrections use span{1 + kappa y, y^2}.  The harmonic pair
    {1 + kappa y, 1 + kappa (1-y)} cannot work here: both members leave
    int (1/2) f'' dpi unchanged, so their residual map is rank one for every
    mu with mass kappa; a curvature direction is required.
    """
    _check_measure(measure, kappa)
    v1 = Polynomial([1.0, kappa])
    v2 = Polynomial([0.0, 0.0, 1.0])
    col1 = _residual_pair(v1, measure, kappa)
    col2 = _residual_pair(v2, measure, kappa)
    M = np.array([col1, col2]).T
    if abs(np.linalg.det(M)) < 1e-10 * max(1.0, kappa) ** 2:
        raise SuiteMemberNotInDomain("correction system is singular for this mu")
    members = []
    for k in degrees:
        g = Polynomial.basis(k)
        rhs = -np.asarray(_residual_pair(g, measure, kappa))
        a, b = np.linalg.solve(M, rhs)
        poly = g + a * v1 + b * v2
        member = SuiteMember(poly, f"y^{k} corrected")
        r0, r1 = _residual_pair(poly, measure, kappa)
        if max(abs(r0), abs(r1)) > BOUNDARY_GATE:
            raise SuiteMemberNotInDomain(
                f"{member.label}: boundary residuals ({r0:.2e}, {r1:.2e})"
            )
        members.append(member)
    return members


def _green_pairing(poly, kappa):
    """x -> int_0^1 (1/2) poly''(y) G(x, y) dy as an exact polynomial."""
    af = 0.5 * poly.deriv(2)
    uL = Polynomial([1.0, kappa])
    uR = Polynomial([1.0 + kappa, -kappa])
    P_L = (af * uL).integ()  # vanishes at 0
    P_R = (af * uR).integ()
    scale = 2.0 / (kappa * (2.0 + kappa))

    def inner(x):
        x = np.asarray(x, dtype=float)
        return scale * (uR(x) * P_L(x) + uL(x) * (P_R(1.0) - P_R(x)))

    return inner


def stationarity_residual(f_suite, measure, density, boundary_gate=BOUNDARY_GATE):
    """max_k |int (1/2) f_k'' dpi| over the suite.

    Each member must pass the nonlocal Robin gate at both endpoints first.
    The integral pairs f'' with phi through the Green kernel, leaving a
    polynomial integrand for the measure, so the only error source is the
    normalization Z.
    """
    dom = Interval(0.0, 1.0)
    worst = 0.0
    for member in f_suite:
        for q in (0.0, 1.0):
            r = boundary_condition_residual((member.f, member.df), dom, measure, q)
            if abs(r) > boundary_gate:
                raise SuiteMemberNotInDomain(
                    f"{member.label}: residual {r:.2e} at q={q} exceeds "
                    f"{boundary_gate}"
                )
        inner = _green_pairing(member.poly, density.kappa)
        val = measure.integrate(inner, floor=1.0) / density.Z
        worst = max(worst, abs(val))
    return worst


def long_run_distance(empirical, density):
    """KS distance between an occupation histogram and the CDF of pi."""
    edges = np.asarray(empirical.edges, dtype=float)
    emp = np.concatenate(
        [[0.0], np.cumsum(empirical.density * np.diff(edges))]
    )
    return float(np.max(np.abs(emp - density.cdf(edges))))
