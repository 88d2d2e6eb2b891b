"""Robin eigenbases and the spectral solution of the nonlocal heat problem.

The elastic generator (1/2)Lap with inward-normal Robin condition
d_n phi = kappa phi has eigenpairs (lambda_j, phi_j); the restart problem's
solution is

    u(t,x) = sum_j [ e^{-lambda_j t} f_j
                     + (gamma_j lambda_j / kappa) I_j(t) ] phi_j(x),
    I_j(t) = int_0^t e^{-lambda_j (t-s)} c(s) ds,

where c(t) = int u(t,y) mu(dy) solves the second-kind Volterra equation

    c(t) = sum_j alpha_j f_j e^{-lambda_j t}
           + sum_j (gamma_j alpha_j lambda_j / kappa) I_j(t).

The marching scheme treats the exponential kernel exactly per step (product
integration with linear interpolation of c), so stiffness from large
lambda_j never enters.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .geometry import Disk, Interval
from .measures import _converge, _gauss_nodes

COEFF_RTOL = 1e-8
BISECT_TOL = 1e-12


class RootBracketingFailed(Exception):
    """Fewer eigenfrequency roots than requested below the scan ceiling."""


class HorizonExceeded(Exception):
    """Requested time lies beyond the computed c(t) grid."""


class TailNotResolved(Exception):
    """The c(t) horizon is too short for the requested Laplace transform."""


class TruncationWarning(UserWarning):
    """The truncated forcing series has a non-negligible last term."""


@dataclass(frozen=True)
class SpectralBasis:
    domain: object
    kappa: float
    eigenvalues: np.ndarray
    eigenfunctions: tuple
    gammas: np.ndarray
    J: int


@dataclass(frozen=True)
class CoefficientSet:
    f_coeffs: np.ndarray
    alpha: np.ndarray


@dataclass(frozen=True)
class CtSolution:
    times: np.ndarray
    values: np.ndarray
    kappa: float
    # marching byproducts reused by evaluate_solution; not part of identity
    lambdas: np.ndarray = field(default=None, repr=False, compare=False)
    mode_integrals: np.ndarray = field(default=None, repr=False, compare=False)


# ------------------------------------------------------------------ interval


@dataclass(frozen=True)
class IntervalMode:
    """phi(x) = (cos(omega x) + (kappa/omega) sin(omega x)) / norm on (0,1)."""

    omega: float
    kappa: float
    norm: float

    def __call__(self, x):
        w, k = self.omega, self.kappa
        return (np.cos(w * x) + (k / w) * np.sin(w * x)) / self.norm


def _interval_root_fn(kappa):
    def g(w):
        return (w * w - kappa * kappa) * np.sin(w) - 2 * kappa * w * np.cos(w)

    return g


def _bisect(g, lo, hi, tol=BISECT_TOL):
    flo = g(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = g(mid)
        if hi - lo < tol:
            return mid
        if (flo < 0) == (fm < 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _scan_roots(g, lo, hi, step):
    grid = np.arange(lo, hi, step)
    vals = g(grid)
    sign = np.sign(vals)
    roots = []
    for i in np.flatnonzero(sign[:-1] * sign[1:] < 0):
        roots.append(_bisect(g, grid[i], grid[i + 1]))
    for i in np.flatnonzero(vals == 0.0):
        if grid[i] > lo:
            roots.append(float(grid[i]))
    return sorted(roots)


def _find_roots(g, n_wanted, ceiling, step, lo=1e-8):
    """Scan + bisect; the ceiling auto-extends twice before giving up."""
    for attempt in range(3):
        roots = _scan_roots(g, lo, ceiling, step)
        if len(roots) >= n_wanted:
            return roots[:n_wanted]
        ceiling *= 2
    raise RootBracketingFailed(
        f"found {len(roots)} roots below {ceiling / 2}, needed {n_wanted}"
    )


def robin_eigenbasis_interval(kappa, J):
    """First J Robin eigenpairs on Interval(0,1), lambda_j = omega_j^2 / 2.

    omega_j solve (w^2 - kappa^2) sin w = 2 kappa w cos w, the compatibility
    condition for phi = cos(w x) + (kappa/w) sin(w x) to satisfy
    phi'(0) = kappa phi(0) and -phi'(1) = kappa phi(1).
    """
    if kappa <= 0 or J < 1:
        raise ValueError("need kappa > 0 and J >= 1")
    g = _interval_root_fn(kappa)
    # step fine enough to catch the near-zero root w_1 ~ sqrt(2 kappa)
    step = min(2e-3, 0.5 * math.sqrt(2 * kappa))
    omegas = np.asarray(_find_roots(g, J, (J + 2) * math.pi, step))
    modes, gammas = [], []
    for w in omegas:
        k2w2 = (kappa / w) ** 2
        n2 = (
            0.5 * (1 + k2w2)
            + math.sin(2 * w) / (4 * w) * (1 - k2w2)
            + kappa * math.sin(w) ** 2 / w**2
        )
        norm = math.sqrt(n2)
        modes.append(IntervalMode(float(w), float(kappa), norm))
        gammas.append(
            (math.sin(w) / w + kappa * (1 - math.cos(w)) / w**2) / norm
        )
    return SpectralBasis(
        Interval(0.0, 1.0),
        float(kappa),
        0.5 * omegas**2,
        tuple(modes),
        np.asarray(gammas),
        int(J),
    )


# ---------------------------------------------------------------------- disk


@dataclass(frozen=True)
class DiskMode:
    """J_m(omega r) * {1, cos(m th), sin(m th)} / norm on the unit disk."""

    m: int
    omega: float
    norm: float
    trig: str  # "one", "cos" or "sin"

    def __call__(self, pts):
        pts = np.asarray(pts, dtype=float)
        r = np.hypot(pts[..., 0], pts[..., 1])
        rad = special.jv(self.m, self.omega * r)
        if self.trig == "one":
            ang = 1.0
        else:
            th = np.arctan2(pts[..., 1], pts[..., 0])
            ang = np.cos(self.m * th) if self.trig == "cos" else np.sin(self.m * th)
        return rad * ang / self.norm


def _disk_radial_roots(m, kappa, ceiling, step=5e-3):
    def g(w):
        return w * special.jvp(m, w) + kappa * special.jv(m, w)

    # no roots below m: both terms are positive while J_m is still increasing
    return _scan_roots(g, max(1e-6, 0.2 * m), ceiling, step)


def robin_eigenbasis_disk(kappa, J):
    """First J Robin eigenpairs on the unit disk, ordered by eigenvalue.

    Radial separation gives J_m(omega r) with -omega J_m'(omega) =
    kappa J_m(omega) at r=1 (inward normal is -r^); each m >= 1 root carries
    a cos/sin pair.  Only m=0 modes have nonzero mean, so gamma_j = 0 for
    all non-radial modes.
    """
    if kappa <= 0 or J < 1:
        raise ValueError("need kappa > 0 and J >= 1")
    # generous sweep: the first root of order m exceeds m, so m <= ceiling
    ceiling = 4.0 + 2.5 * math.sqrt(2.0 * J)
    candidates = []  # (omega, m)
    for m in range(int(ceiling) + 1):
        candidates.extend((w, m) for w in _disk_radial_roots(m, kappa, ceiling))
    candidates.sort()
    modes, lams, gammas = [], [], []
    for w, m in candidates:
        if len(modes) >= J:
            break
        jm = special.jv(m, w)
        jmp = special.jvp(m, w)
        rad2 = 0.5 * (jmp**2 + (1 - m**2 / w**2) * jm**2)
        if m == 0:
            norm = math.sqrt(2 * math.pi * rad2)
            modes.append(DiskMode(0, float(w), norm, "one"))
            lams.append(0.5 * w * w)
            gammas.append(2 * math.pi * special.jv(1, w) / (w * norm))
        else:
            norm = math.sqrt(math.pi * rad2)
            for trig in ("cos", "sin"):
                if len(modes) >= J:
                    break
                modes.append(DiskMode(int(m), float(w), norm, trig))
                lams.append(0.5 * w * w)
                gammas.append(0.0)
    if len(modes) < J:
        raise RootBracketingFailed(f"only {len(modes)} disk modes below {ceiling}")
    return SpectralBasis(
        Disk((0.0, 0.0), 1.0),
        float(kappa),
        np.asarray(lams),
        tuple(modes),
        np.asarray(gammas),
        int(J),
    )


# -------------------------------------------------------------- coefficients


def _l2_inner_interval(f, phi, rtol=COEFF_RTOL):
    def level(n):
        x, w = _gauss_nodes(0.0, 1.0, n)
        return float(np.dot(w, f(x) * phi(x)))

    # floor=1: coefficients of O(1)-normalized data carry absolute tolerance
    return _converge(
        (level(n) for n in (64, 128, 256, 512, 1024)), rtol, "f_j", floor=1.0
    )


def _l2_inner_disk(f, phi, rtol=COEFF_RTOL):
    def level(n):
        r, wr = _gauss_nodes(0.0, 1.0, n)
        th = np.linspace(0.0, 2 * math.pi, 2 * n, endpoint=False)
        R, T = np.meshgrid(r, th, indexing="ij")
        pts = np.column_stack([(R * np.cos(T)).ravel(), (R * np.sin(T)).ravel()])
        vals = (f(pts) * phi(pts)).reshape(n, 2 * n)
        return float(np.dot(wr, r * vals.sum(axis=1))) * (2 * math.pi / (2 * n))

    return _converge((level(n) for n in (64, 128, 256, 512)), rtol, "f_j", floor=1.0)


def project_coefficients(f, measure, basis):
    """f_j = <f, phi_j> by adaptive quadrature; alpha_j = int phi_j d mu."""
    inner = _l2_inner_interval if basis.domain.dimension == 1 else _l2_inner_disk
    f_coeffs = np.array([inner(f, phi) for phi in basis.eigenfunctions])
    alpha = np.array(
        [measure.integrate(phi, floor=1.0) for phi in basis.eigenfunctions]
    )
    return CoefficientSet(f_coeffs, alpha)


# ------------------------------------------------------------------ Volterra


def _product_weights(lam, dt):
    """(E, A, B): exact-exponential step weights for linear interpolants.

    int_0^dt e^{-lam (dt - s)} (linear c) ds = A c_n + B c_{n+1}, E = e^{-lam dt}.
    """
    theta = lam * dt
    E = np.exp(-theta)
    A = np.empty_like(lam)
    B = np.empty_like(lam)
    small = theta < 1e-4
    ts = theta[small]
    B[small] = dt * (0.5 - ts / 6 + ts**2 / 24)
    A[small] = dt * (0.5 - ts / 3 + ts**2 / 8)
    big = ~small
    tb = theta[big]
    B[big] = (1.0 - (1.0 - E[big]) / tb) / lam[big]
    A[big] = (1.0 - E[big]) / lam[big] - B[big]
    return E, A, B


def solve_volterra(basis, coeffs, kappa, T, dt, scheme="product_trapezoid"):
    """March c(t) on a uniform grid with per-step exact exponential kernels.

    scheme "rectangle" (left-endpoint product rule, first order) exists as a
    cross-check for the default second-order product-trapezoid rule.
    """
    if dt > T / 100:
        raise ValueError(f"dt={dt} too coarse: need dt <= T/100 = {T / 100}")
    lam = np.asarray(basis.eigenvalues, dtype=float)
    fj = np.asarray(coeffs.f_coeffs, dtype=float)
    aj = np.asarray(coeffs.alpha, dtype=float)
    forcing = aj * fj
    last = abs(forcing[-1])
    partial = abs(forcing.sum())
    if last > 1e-6 * max(partial, 1e-300) and last > 0:
        warnings.warn(
            f"last forcing term {last:.2e} exceeds 1e-6 of the partial sum "
            f"{partial:.2e}; increase J",
            TruncationWarning,
        )
    w = basis.gammas * aj * lam / kappa
    n_t = int(round(T / dt))
    times = np.arange(n_t + 1) * dt
    E, A, B = _product_weights(lam, dt)
    c = np.empty(n_t + 1)
    c[0] = forcing.sum()
    I = np.zeros((len(lam), n_t + 1))
    decay = np.ones_like(lam)
    cur = np.zeros_like(lam)
    if scheme == "product_trapezoid":
        denom = 1.0 - np.dot(w, B)
        for n in range(n_t):
            half = E * cur + A * c[n]
            decay = decay * E
            c[n + 1] = (np.dot(forcing, decay) + np.dot(w, half)) / denom
            cur = half + B * c[n + 1]
            I[:, n + 1] = cur
    elif scheme == "rectangle":
        Ar = np.where(lam > 0, (1.0 - E) / np.where(lam > 0, lam, 1.0), dt)
        for n in range(n_t):
            cur = E * cur + Ar * c[n]
            decay = decay * E
            c[n + 1] = np.dot(forcing, decay) + np.dot(w, cur)
            I[:, n + 1] = cur
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    return CtSolution(times, c, float(kappa), lambdas=lam, mode_integrals=I)


def _mode_integrals_at(c, lam, t):
    """I_j(t) for piecewise-linear c by product integration (off-grid t ok)."""
    times = np.asarray(c.times)
    values = np.asarray(c.values)
    dt = times[1] - times[0]
    n_full = int(math.floor(t / dt + 1e-12))
    n_full = min(n_full, len(times) - 1)
    E, A, B = _product_weights(lam, dt)
    cur = np.zeros_like(lam)
    for n in range(n_full):
        cur = E * cur + A * values[n] + B * values[n + 1]
    rem = t - n_full * dt
    if rem > 1e-12 * max(1.0, t):
        c_end = float(np.interp(t, times, values))
        Er, Ar, Br = _product_weights(lam, rem)
        cur = Er * cur + Ar * values[n_full] + Br * c_end
    return cur


def evaluate_solution(basis, coeffs, c, t, x):
    """u(t, x) from the truncated series; x may be a point or an array."""
    times = np.asarray(c.times)
    if t > times[-1] + 1e-12:
        raise HorizonExceeded(f"t={t} beyond c horizon {times[-1]}")
    lam = np.asarray(basis.eigenvalues, dtype=float)
    dt = times[1] - times[0]
    n = int(round(t / dt))
    on_grid = abs(t - n * dt) <= 1e-9 * max(1.0, times[-1])
    if (
        on_grid
        and c.mode_integrals is not None
        and c.lambdas is not None
        and len(c.lambdas) == len(lam)
        and np.array_equal(c.lambdas, lam)
    ):
        I = c.mode_integrals[:, n]
    else:
        I = _mode_integrals_at(c, lam, t)
    coef = np.exp(-lam * t) * coeffs.f_coeffs + basis.gammas * lam / c.kappa * I
    acc = None
    for cj, phi in zip(coef, basis.eigenfunctions):
        term = cj * phi(x)
        acc = term if acc is None else acc + term
    if np.isscalar(x) or (basis.domain.dimension == 2 and np.ndim(x) == 1):
        return float(acc)
    return acc


# ------------------------------------------------------------------- Laplace


def closed_form_transform(coeffs, basis, kappa, z):
    """c~(z) = [sum a_j f_j/(z+l_j)] / [1 - sum g_j a_j l_j / (kappa (z+l_j))]."""
    lam = basis.eigenvalues
    num = np.sum(coeffs.alpha * coeffs.f_coeffs / (z + lam))
    den = 1.0 - np.sum(basis.gammas * coeffs.alpha * lam / (kappa * (z + lam)))
    return num / den


def numerical_transform(c, basis, coeffs, kappa, z):
    """Laplace-transform the gridded c exactly for its linear interpolant,
    then append the slowest-mode exponential tail beyond the horizon."""
    times = np.asarray(c.times)
    values = np.asarray(c.values)
    dt = times[1] - times[0]
    zd = z * dt
    P = (1.0 - math.exp(-zd)) / z
    Q = (1.0 - math.exp(-zd) * (1.0 + zd)) / (z * z * dt)
    decay = np.exp(-z * times[:-1])
    body = float(np.sum(decay * (values[:-1] * (P - Q) + values[1:] * Q)))
    # tail: c(t) ~ c_inf + (c(T) - c_inf) e^{-lambda_1 (t - T)}
    lam = basis.eigenvalues
    c_inf = (
        kappa
        * np.sum(coeffs.alpha * coeffs.f_coeffs / lam)
        / np.sum(basis.gammas * coeffs.alpha / lam)
    )
    T = float(times[-1])
    cT = float(values[-1])
    tail = math.exp(-z * T) * (c_inf / z + (cT - c_inf) / (z + lam[0]))
    return body + tail, cT


def laplace_check(c, basis, coeffs, kappa, z_list):
    """Max relative residual between numerical and closed-form transforms."""
    worst = 0.0
    T = float(np.asarray(c.times)[-1])
    for z in z_list:
        closed = closed_form_transform(coeffs, basis, kappa, z)
        numeric, cT = numerical_transform(c, basis, coeffs, kappa, z)
        if abs(cT) * math.exp(-z * T) > 1e-6 * abs(numeric):
            raise TailNotResolved(
                f"c(T) e^(-zT) = {abs(cT) * math.exp(-z * T):.2e} not below "
                f"1e-6 of the transform at z={z}; extend the horizon"
            )
        worst = max(worst, abs(numeric - closed) / abs(closed))
    return worst
