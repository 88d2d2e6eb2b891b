"""Half-line trace process and the half-space Dirichlet-to-Neumann check.

Two independent routes to the subordination identity Psi(lam) = Phi(sqrt(2 lam)):

* path route: the inverse boundary local time of the restart process on
  [0, inf) is a subordinator, so -log E[exp(-lam sigma(l*))] / l* estimates
  Psi at a first-passage level l*.  The Euler-Skorokhod local time runs at a
  scheme-dependent rate relative to the semimartingale normalization; a
  kappa = 0 run against the exact sqrt(2 lam) exponent measures that rate
  once, and the constant is applied multiplicatively afterwards.

* harmonic route: the Poisson extension to the upper half-plane is computed
  mode by mode with the FFT, and the boundary operator
      K f(x) = d_y u(x, 0+) + integral of (u(x, z) - u(x, 0)) mu(dz)
  is evaluated once with one-sided finite differences plus z-slice
  quadrature, and once as the Fourier multiplier -Phi(|xi|).

Fields live on a periodic embedding of length R = N * dx.  Everything is
one-dimensional in x; the symbol depends on |xi| only, so higher boundary
dimensions add no new content.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import HalfLine
from .measures import (
    DensityOnGrid,
    FiniteMixtureOfPointMasses,
    LaplaceExponent,
    PointMass,
    QuadratureNotConverged,
    TruncatedGaussian,
    UniformOnBall,
    UnsupportedDomain,
)
from .sde import PathRecord, simulate_path

# relative size below which the embedding edges count as decayed
EDGE_DECAY = 1e-8

# fraction of spectral mass allowed above 0.9 * Nyquist
ALIAS_TOL = 1e-6


class InsufficientLevel(Exception):
    """Too few paths reached the requested local-time level."""


class AliasingDetected(Exception):
    """Spectral mass near the Nyquist frequency is not negligible."""


# a half-line path is an ordinary PathRecord with boundary {0}
HalfLinePath = PathRecord


def simulate_halfline(measure, x0, T, h, seed):
    """Single restart-process path on [0, inf); measure=None disables jumps.

    The kappa = 0 case uses the discrete Skorokhod map directly: with
    W_k the partial sums of the Gaussian steps, the projection recursion
    x_{k+1} = max(x_k + dW, 0) has the closed form x_k = x0 + W_k + L_k,
    L_k = max(0, max_j (-x0 - W_j)), which is evaluated vectorized.
    """
    if x0 < 0:
        raise ValueError("x0 must lie on the half-line")
    rng = np.random.default_rng(seed)
    if measure is not None:
        return simulate_path(HalfLine(), measure, x0, T, h, rng)
    if h <= 0 or h > T:
        raise ValueError("need 0 < h <= T")
    n = int(round(T / h))
    times = np.arange(n + 1) * h
    w = np.cumsum(math.sqrt(h) * rng.standard_normal(n))
    lt = np.maximum.accumulate(np.maximum(-x0 - w, 0.0))
    positions = np.empty(n + 1)
    local_time = np.zeros(n + 1)
    positions[0] = x0
    positions[1:] = x0 + w + lt
    local_time[1:] = lt
    empty = np.array([], dtype=int)
    return PathRecord(times, positions, local_time, empty, np.array([]))


@dataclass(frozen=True)
class FirstPassageSample:
    """First-passage times sigma(l*) = inf{t : L_t >= l*} over an ensemble.

    Paths that have not reached the level by the horizon are censored at
    sigma = horizon and flagged in `reached`; whether the censored fraction
    is tolerable is decided by the estimator, not here.
    """

    sigma: np.ndarray
    reached: np.ndarray
    ell_star: float
    horizon: float
    h: float
    kappa: float
    seed: int


def first_passage_ensemble(measure, ell_star, T, h, n_paths, seed):
    """Vectorized sigma(l*) sample; pure function of its arguments.

    Finished paths are dropped from the working arrays, so the cost is
    proportional to the summed sojourn below the level rather than to
    n_paths * T / h.
    """
    if ell_star <= 0:
        raise ValueError("ell_star must be positive")
    if h <= 0 or h > T:
        raise ValueError("need 0 < h <= T")
    kappa = 0.0
    if measure is not None:
        measure.validate_support(HalfLine())
        kappa = measure.total_mass
    rng = np.random.default_rng(seed)
    n_steps = int(round(T / h))
    s = math.sqrt(h)
    x = np.zeros(n_paths)
    L = np.zeros(n_paths)
    thr = rng.exponential(1.0 / kappa, n_paths) if kappa > 0 else None
    sigma = np.full(n_paths, float(T))
    reached = np.zeros(n_paths, dtype=bool)
    idx = np.arange(n_paths)
    for k in range(1, n_steps + 1):
        prop = x + s * rng.standard_normal(idx.size)
        x = np.maximum(prop, 0.0)
        L = L + (x - prop)
        if kappa > 0.0:
            crossed = np.flatnonzero(L >= thr)
            if crossed.size:
                x[crossed] = measure.sample(rng, crossed.size)
                thr[crossed] += rng.exponential(1.0 / kappa, crossed.size)
        done = L >= ell_star
        if done.any():
            hit = idx[done]
            sigma[hit] = k * h
            reached[hit] = True
            keep = ~done
            x, L, idx = x[keep], L[keep], idx[keep]
            if kappa > 0.0:
                thr = thr[keep]
            if idx.size == 0:
                break
    return FirstPassageSample(
        sigma, reached, float(ell_star), float(T), float(h), kappa, int(seed)
    )


def first_passage_from_paths(paths, ell_star):
    """Extract sigma(l*) from fully recorded paths (small-ensemble route)."""
    if ell_star <= 0:
        raise ValueError("ell_star must be positive")
    paths = list(paths)
    if not paths:
        raise ValueError("need at least one path")
    sig = np.empty(len(paths))
    reached = np.zeros(len(paths), dtype=bool)
    for i, rec in enumerate(paths):
        j = int(np.searchsorted(rec.local_time, ell_star, side="left"))
        if j < len(rec.times):
            sig[i] = rec.times[j]
            reached[i] = True
        else:
            sig[i] = rec.times[-1]
    rec = paths[0]
    return FirstPassageSample(
        sig,
        reached,
        float(ell_star),
        float(rec.times[-1]),
        float(rec.times[1] - rec.times[0]),
        math.nan,
        -1,
    )


@dataclass(frozen=True)
class ExponentEstimate:
    """Empirical subordinator exponent on a lambda grid with bootstrap errors."""

    lams: np.ndarray
    psi: np.ndarray
    std_error: np.ndarray
    ell_star: float
    n_paths: int

    def ci(self, z=1.96):
        return self.psi - z * self.std_error, self.psi + z * self.std_error


def inverse_local_time_exponent(
    sample, lams, ell_star=None, min_reached=0.95, n_boot=400, boot_seed=0
):
    """Psi_hat(lam) = -log E[exp(-lam sigma(l*))] / l* with bootstrap errors.

    `sample` is a FirstPassageSample or an iterable of half-line paths (then
    ell_star is required).  Censored paths enter at sigma = horizon, which
    biases exp(-lam sigma) by at most e^{-lam T} per path; the min_reached
    gate keeps that regime honest.
    """
    if not isinstance(sample, FirstPassageSample):
        if ell_star is None:
            raise ValueError("ell_star is required when passing raw paths")
        sample = first_passage_from_paths(sample, ell_star)
    frac = float(np.mean(sample.reached))
    if frac < min_reached:
        raise InsufficientLevel(
            f"only {100 * frac:.1f}% of paths reached ell*={sample.ell_star} "
            f"by T={sample.horizon}"
        )
    lams = np.atleast_1d(np.asarray(lams, dtype=float))
    if np.any(lams <= 0):
        raise ValueError("lambda must be positive")
    ell = sample.ell_star
    weights = np.exp(-np.outer(lams, sample.sigma))
    psi = -np.log(weights.mean(axis=1)) / ell
    rng = np.random.default_rng(boot_seed)
    n = sample.sigma.size
    idx = rng.integers(0, n, size=(n_boot, n))
    se = np.empty(len(lams))
    for i in range(len(lams)):
        boot = -np.log(weights[i][idx].mean(axis=1)) / ell
        se[i] = boot.std(ddof=1)
    return ExponentEstimate(lams, psi, se, ell, n)


def local_time_calibration(estimate):
    """Scheme-to-continuum local-time rate from a kappa = 0 estimate.

    If the projection local time runs at beta times the semimartingale
    clock then psi_hat(lam) = sqrt(2 lam) / beta, so the returned mean of
    sqrt(2 lam) / psi_hat estimates beta, and beta * psi_hat is the
    calibrated exponent for any later jump measure.
    """
    return float(np.mean(np.sqrt(2.0 * estimate.lams) / estimate.psi))


def psi_prediction(measure, lam):
    """Continuum exponent Phi(sqrt(2 lam)); measure=None gives sqrt(2 lam)."""
    lam = float(lam)
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    u = math.sqrt(2.0 * lam)
    if measure is None:
        return u
    return LaplaceExponent(measure)(u)


@dataclass(frozen=True)
class GridField:
    """Real field on a uniform grid, periodically embedded for the FFT.

    The grid size must be a power of two, and the values must decay below
    EDGE_DECAY (relative to the sup norm) at both edges so that the
    periodic continuation carries no jump; taper data that does not decay
    on its own (see sample_field).
    """

    x: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "values", v)
        n = x.size
        if n < 4 or n & (n - 1):
            raise ValueError("grid size must be a power of two (>= 4)")
        if v.shape != x.shape:
            raise ValueError("values and grid differ in shape")
        steps = np.diff(x)
        if not np.allclose(steps, steps[0], rtol=1e-10, atol=0.0):
            raise ValueError("grid must be uniform")
        m = float(np.max(np.abs(v)))
        if m > 0.0 and max(abs(v[0]), abs(v[-1])) > EDGE_DECAY * m:
            raise ValueError("field does not decay at the embedding edges")

    @property
    def n(self):
        return int(self.x.size)

    @property
    def dx(self):
        return float(self.x[1] - self.x[0])

    @property
    def length(self):
        return self.n * self.dx

    @property
    def frequencies(self):
        return 2.0 * math.pi * np.fft.rfftfreq(self.n, self.dx)


def _planck_taper(t):
    """C-infinity ramp 0 -> 1 on t in [0, 1]; flat to all orders at both ends."""
    t = np.clip(t, 0.0, 1.0)
    w = np.where(t >= 1.0, 1.0, 0.0)
    inner = (t > 0.0) & (t < 1.0)
    ti = t[inner]
    with np.errstate(over="ignore"):
        w[inner] = 1.0 / (1.0 + np.exp(1.0 / ti - 1.0 / (1.0 - ti)))
    return w


def sample_field(func, half_width, n, window=0.0):
    """Evaluate func on [-half_width, half_width) and optionally taper it.

    window > 0 multiplies by a Planck taper rising over that fraction of
    each end, exactly zero at the edges; use it for data without natural
    decay.
    """
    if half_width <= 0:
        raise ValueError("half_width must be positive")
    x = (np.arange(n) - n // 2) * (2.0 * half_width / n)
    v = np.asarray(func(x), dtype=float)
    if window > 0.0:
        t = (half_width - np.abs(x)) / (window * half_width)
        v = v * _planck_taper(t)
    return GridField(x, v)


def _spectrum(field):
    fhat = np.fft.rfft(field.values)
    xi = field.frequencies
    power = np.abs(fhat) ** 2
    total = float(power.sum())
    high = float(power[xi > 0.9 * xi[-1]].sum())
    if total > 0.0 and high > ALIAS_TOL * total:
        raise AliasingDetected(
            f"{high / total:.2e} of spectral mass above 0.9 * Nyquist"
        )
    return fhat, xi


def _slices(fhat, xi, n, ys):
    return np.fft.irfft(np.exp(-np.outer(ys, xi)) * fhat, n=n, axis=1)


def poisson_extension(field, ys):
    """Harmonic extension slices u(., y), one row per y in ys."""
    ys = np.atleast_1d(np.asarray(ys, dtype=float))
    if np.any(ys < 0):
        raise ValueError("y must be nonnegative")
    fhat, xi = _spectrum(field)
    return _slices(fhat, xi, field.n, ys)


def _levy_quadrature(measure, order):
    """(nodes, weights, exact) integrating dmu over z; exact for atoms."""
    if isinstance(measure, PointMass):
        return np.array([float(measure.point)]), np.array([measure.weight]), True
    if isinstance(measure, FiniteMixtureOfPointMasses):
        pts = np.asarray(measure.points, dtype=float)
        return pts, np.asarray(measure.weights, dtype=float), True
    if isinstance(measure, DensityOnGrid):
        pts = np.asarray(measure.grid, dtype=float)
        return pts, np.asarray(measure.weights, dtype=float), True
    q, w = np.polynomial.legendre.leggauss(order)
    if isinstance(measure, UniformOnBall):
        z = float(measure.center) + measure.radius * q
        return z, w * (measure.weight / 2.0), False
    if isinstance(measure, TruncatedGaussian):
        a, b = measure.domain.a, measure.domain.b
        z = 0.5 * (a + b) + 0.5 * (b - a) * q
        c, s = float(measure.center), measure.sigma
        pdf = np.exp(-0.5 * ((z - c) / s) ** 2) / (s * math.sqrt(2.0 * math.pi))
        zc = 0.5 * (
            math.erf((b - c) / (s * math.sqrt(2.0)))
            - math.erf((a - c) / (s * math.sqrt(2.0)))
        )
        return z, w * (0.5 * (b - a) / zc * measure.weight) * pdf, False
    raise UnsupportedDomain(f"no z-quadrature rule for measure kind {measure.kind!r}")


def _jump_term(fhat, xi, n, measure, tol, max_order):
    """integral of (u(x, z) - u(x, 0)) dmu(z) from honest slice evaluation."""
    u0 = np.fft.irfft(fhat, n=n)
    prev = None
    order = 8
    while order <= max_order:
        z, w, exact = _levy_quadrature(measure, order)
        val = w @ _slices(fhat, xi, n, z) - measure.total_mass * u0
        if exact:
            return val
        if prev is not None and np.max(np.abs(val - prev)) <= tol * max(
            1.0, float(np.max(np.abs(val)))
        ):
            return val
        prev = val
        order *= 2
    raise QuadratureNotConverged("z-slice quadrature did not stabilize")


@dataclass(frozen=True)
class DtnComparison:
    """Both routes to Kf plus their sup discrepancy over sup|f|."""

    residual: float
    direct: np.ndarray
    symbol: np.ndarray


def _symbol_multiplier(measure, xi):
    if measure is None:
        return xi
    phi = LaplaceExponent(measure)
    return np.array([phi(float(v)) for v in xi])


def dtn_compare(field, measure, quad_tol=1e-9, max_order=256):
    """Compare the two routes to the boundary operator Kf.

    direct: 4th-order one-sided d_y at y = 0 from slices {0, .., 4 delta},
    delta = dx, plus z-slice quadrature of the jump integral; symbol:
    inverse transform of -Phi(|xi|) fhat.  Returns the max pointwise
    discrepancy normalized by sup|f|.
    """
    fhat, xi = _spectrum(field)
    delta = field.dx
    U = _slices(fhat, xi, field.n, delta * np.arange(5.0))
    stencil = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / (12.0 * delta)
    direct = stencil @ U
    if measure is not None:
        direct = direct + _jump_term(fhat, xi, field.n, measure, quad_tol, max_order)
    symbol = np.fft.irfft(-_symbol_multiplier(measure, xi) * fhat, n=field.n)
    scale = float(np.max(np.abs(field.values)))
    residual = float(np.max(np.abs(direct - symbol))) / scale
    return DtnComparison(residual, direct, symbol)


def dtn_pairing(field, measure):
    """Grid inner product <Kf, f> dx through the symbol route; always <= 0."""
    fhat, xi = _spectrum(field)
    out = np.fft.irfft(-_symbol_multiplier(measure, xi) * fhat, n=field.n)
    return float(np.dot(out, field.values) * field.dx)
