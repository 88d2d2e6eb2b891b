"""Dumbbell escape experiment: reflected vs restart dynamics.

The mean first-passage time to a target ball in the far chamber diverges as
the neck narrows under pure reflection, while local-time restarts from a
fixed interior measure keep it bounded.  The renewal argument gives
M <= S/alpha0 + R0 with S = sup_x E_x[tau_1] (mean first-jump time),
alpha0 the restart-measure fraction landing in a compact set K of the
target chamber, and R0 = sup_{x in K} E_x[T_B].  All three quantities are
censored Monte Carlo estimates on a filleted dumbbell whose neck
half-width eps varies while the restart measure stays fixed.

Sup-type quantities are proxied by maxima over a fixed lattice of start
points (the 5x5 hull lattice filtered to the domain interior), reported as
such.  Estimates with any censoring are flagged lower bounds; estimates
with more than CENSOR_LIMIT censoring raise CensoringDominates.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, replace

import numpy as np

from .geometry import PROJ_TOL, Dumbbell, DumbbellParams
from .measures import (
    DensityOnGrid,
    FiniteMixtureOfPointMasses,
    PointMass,
    UniformOnBall,
    UnsupportedDomain,
)

CENSOR_LIMIT = 0.20

# default geometry: unit chambers at (+-2, 0), fillets rho = 0.25
DEFAULT_DUMBBELL = DumbbellParams(1.0, ((-2.0, 0.0), (2.0, 0.0)), 0.4, 0.25)
DEFAULT_EPS_GRID = (0.4, 0.2, 0.1, 0.05)


class CensoringDominates(Exception):
    """More than CENSOR_LIMIT of the paths hit the censoring horizon."""


def _ball_inside_chamber(center, radius, chamber_center, chamber_radius, what):
    gap = math.hypot(center[0] - chamber_center[0], center[1] - chamber_center[1])
    if gap + radius >= chamber_radius:
        raise ValueError(f"{what} must lie strictly inside the second chamber")


def _mass_in_ball(measure, center, radius):
    """mu of a closed ball; exact for atoms, nested-or-disjoint for balls."""
    cx, cy = center

    def inside(p, extra=0.0):
        return math.hypot(p[0] - cx, p[1] - cy) + extra <= radius

    if isinstance(measure, PointMass):
        return measure.weight if inside(measure.point) else 0.0
    if isinstance(measure, FiniteMixtureOfPointMasses):
        return sum(
            w for p, w in zip(measure.points, measure.weights) if inside(p)
        )
    if isinstance(measure, DensityOnGrid):
        return sum(w for p, w in zip(measure.grid, measure.weights) if inside(p))
    if isinstance(measure, UniformOnBall):
        c, r = measure.center, measure.radius
        if inside(c, extra=r):
            return measure.weight
        if math.hypot(c[0] - cx, c[1] - cy) > radius + r:
            return 0.0
        raise UnsupportedDomain("measure support straddles the region boundary")
    raise UnsupportedDomain(f"no region-mass rule for measure kind {measure.kind!r}")


@dataclass(frozen=True)
class EscapeConfig:
    """Geometry, dynamics and estimator parameters for one escape study.

    `dumbbell` is a template; its neck half-width is replaced by each value
    of eps_grid in turn, so the chambers, the target ball B, the compact
    set K and the restart measure are shared across the grid.
    """

    dumbbell: DumbbellParams = DEFAULT_DUMBBELL
    target_center: tuple = (2.0, 0.0)
    target_radius: float = 0.2
    measure: object = None
    region_center: tuple = (2.0, 0.0)
    region_radius: float = 0.5
    eps_grid: tuple = DEFAULT_EPS_GRID
    n_paths: int = 400
    h: float = 2.5e-4
    t_max: float = 500.0

    def __post_init__(self):
        r = self.dumbbell.chamber_radius
        c2 = self.dumbbell.chamber_centers[1]
        _ball_inside_chamber(self.target_center, self.target_radius, c2, r, "target")
        if self.target_radius <= 0:
            raise ValueError("target_radius must be positive")
        _ball_inside_chamber(self.region_center, self.region_radius, c2, r, "region K")
        if not self.eps_grid:
            raise ValueError("eps_grid must be nonempty")
        for eps in self.eps_grid:
            replace(self.dumbbell, neck_halfwidth=eps)  # geometry validation
        if not (self.h > 0 and self.t_max > 0 and math.isfinite(self.t_max)):
            raise ValueError("need finite t_max and positive h")
        if self.h > self.t_max:
            raise ValueError("h exceeds t_max")
        if self.n_paths < 2:
            raise ValueError("need at least two paths")
        if self.measure is not None:
            if self.measure.dimension != 2:
                raise ValueError("restart measure must be planar")
            if self.alpha0 <= 0.0:
                raise ValueError("restart measure puts no mass in K")

    def domain(self, eps):
        return Dumbbell(replace(self.dumbbell, neck_halfwidth=eps))

    @property
    def alpha0(self):
        if self.measure is None:
            raise ValueError("alpha0 needs a restart measure")
        return _mass_in_ball(
            self.measure, self.region_center, self.region_radius
        ) / self.measure.total_mass

    @property
    def measure_checksum(self):
        return hashlib.sha256(repr(self.measure).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class MfptEstimate:
    """Censored-mean MFPT for one (eps, start, dynamics) cell.

    valid is False whenever any path was censored; the estimate is then a
    lower bound and is excluded from bound comparisons.
    """

    eps: float
    x0: tuple
    dynamics: str
    mfpt: float
    std_error: float
    censored_frac: float
    n_paths: int
    valid: bool
    measure_checksum: str = ""


@dataclass(frozen=True)
class RenewalRow:
    """Per-eps renewal quantities: bound = s_hat/alpha0 + r0_hat."""

    eps: float
    s_hat: float
    s_se: float
    r0_hat: float
    r0_se: float
    alpha0: float
    bound: float
    bound_se: float


def bound_from(s_hat, r0_hat, alpha0):
    """The renewal bound S/alpha0 + R0 as plain algebra."""
    if not 0.0 < alpha0 <= 1.0:
        raise ValueError("alpha0 must lie in (0, 1]")
    return s_hat / alpha0 + r0_hat


def _check_start(domain, p):
    if domain.signed_distance(np.asarray(p, dtype=float)) > PROJ_TOL:
        raise ValueError(f"start point {tuple(p)} lies outside the domain")


def _hit_times(domain, measure, starts, center, radii, h, t_max, rng):
    """First entry times into concentric closed balls, censored at t_max.

    radii must be strictly decreasing (nested targets); a path retires once
    the smallest ball is hit.  measure=None gives pure reflection, else the
    Exp(kappa) local-time clock relocates paths exactly as in sde.
    Returns (times, reached) of shape (len(radii), n).
    """
    starts = np.asarray(starts, dtype=float)
    n = len(starts)
    radii = np.asarray(radii, dtype=float)
    if np.any(np.diff(radii) >= 0):
        raise ValueError("radii must be strictly decreasing")
    r2 = radii**2
    cx, cy = center
    kappa = measure.total_mass if measure is not None else 0.0
    tau = np.full((len(radii), n), float(t_max))
    reached = np.zeros((len(radii), n), dtype=bool)
    pos = starts.copy()
    idx = np.arange(n)
    stage = np.zeros(n, dtype=int)  # next radius index each path must enter
    L = np.zeros(n)
    thr = rng.exponential(1.0 / kappa, n) if kappa > 0 else None
    s = math.sqrt(h)

    def mark(t):
        nonlocal pos, idx, stage, L, thr
        d2 = (pos[:, 0] - cx) ** 2 + (pos[:, 1] - cy) ** 2
        for i in range(len(r2)):
            fresh = (stage <= i) & (d2 <= r2[i])
            if fresh.any():
                rows = idx[fresh]
                tau[i, rows] = t
                reached[i, rows] = True
                stage[fresh] = i + 1
        finished = stage >= len(r2)
        if finished.any():
            keep = ~finished
            pos, idx, stage, L = pos[keep], idx[keep], stage[keep], L[keep]
            if thr is not None:
                thr = thr[keep]
        return idx.size

    if mark(0.0) == 0:
        return tau, reached
    for k in range(1, int(round(t_max / h)) + 1):
        prop = pos + s * rng.standard_normal((idx.size, 2))
        pos, dl = domain.project_block(prop, rng)
        if kappa > 0.0:
            L += dl
            crossed = np.flatnonzero(L >= thr)
            if crossed.size:
                pos[crossed] = measure.sample(rng, crossed.size)
                thr[crossed] += rng.exponential(1.0 / kappa, crossed.size)
        if mark(k * h) == 0:
            break
    return tau, reached


def _first_jump_times(domain, measure, starts, h, t_max, rng):
    """tau_1 = first local-time threshold crossing, censored at t_max."""
    starts = np.asarray(starts, dtype=float)
    n = len(starts)
    kappa = measure.total_mass
    tau = np.full(n, float(t_max))
    fired = np.zeros(n, dtype=bool)
    pos = starts.copy()
    idx = np.arange(n)
    L = np.zeros(n)
    thr = rng.exponential(1.0 / kappa, n)
    s = math.sqrt(h)
    for k in range(1, int(round(t_max / h)) + 1):
        prop = pos + s * rng.standard_normal((idx.size, 2))
        pos, dl = domain.project_block(prop, rng)
        L += dl
        crossed = L >= thr
        if crossed.any():
            rows = idx[crossed]
            tau[rows] = k * h
            fired[rows] = True
            keep = ~crossed
            pos, idx, L, thr = pos[keep], idx[keep], L[keep], thr[keep]
            if idx.size == 0:
                break
    return tau, fired


def _cell_estimate(eps, x0, dynamics, times, reached, checksum):
    cen = 1.0 - float(np.mean(reached))
    if cen > CENSOR_LIMIT:
        raise CensoringDominates(
            f"{dynamics} mfpt at eps={eps}, x0={tuple(float(v) for v in x0)}: "
            f"{100 * cen:.0f}% of paths censored"
        )
    return MfptEstimate(
        float(eps),
        tuple(float(v) for v in x0),
        dynamics,
        float(times.mean()),
        float(times.std(ddof=1) / math.sqrt(times.size)),
        cen,
        int(times.size),
        cen == 0.0,
        checksum,
    )


def _mfpt_table(config, measure, dynamics, x0_list, seed):
    x0s = [np.asarray(p, dtype=float) for p in x0_list]
    rows = []
    for i_eps, eps in enumerate(config.eps_grid):
        domain = config.domain(eps)
        checksum = config.measure_checksum if measure is not None else ""
        if measure is not None:
            measure.validate_support(domain)
        for p in x0s:
            _check_start(domain, p)
        starts = np.repeat(np.stack(x0s), config.n_paths, axis=0)
        rng = np.random.default_rng([seed, i_eps])
        times, reached = _hit_times(
            domain,
            measure,
            starts,
            config.target_center,
            [config.target_radius],
            config.h,
            config.t_max,
            rng,
        )
        for j, p in enumerate(x0s):
            cell = slice(j * config.n_paths, (j + 1) * config.n_paths)
            rows.append(
                _cell_estimate(eps, p, dynamics, times[0, cell], reached[0, cell], checksum)
            )
    return rows


def mfpt_reflected(config, x0_list, seed):
    """Censored-mean MFPT table for pure reflection, per (eps, x0)."""
    return _mfpt_table(config, None, "reflected", x0_list, seed)


def mfpt_jump(config, x0_list, seed):
    """Censored-mean MFPT table for the restart process, per (eps, x0)."""
    if config.measure is None:
        raise ValueError("mfpt_jump needs a restart measure")
    return _mfpt_table(config, config.measure, "jump", x0_list, seed)


def start_grid(config, eps, m=5):
    """m x m hull lattice filtered to the interior; proxy for sup over x."""
    par = config.dumbbell
    r = par.chamber_radius
    c1, c2 = par.chamber_centers
    xs = np.linspace(c1[0] - 0.65 * r, c2[0] + 0.65 * r, m)
    ys = np.linspace(-0.8 * r, 0.8 * r, m) + c1[1]
    domain = config.domain(eps)
    pts = [
        (float(x), float(y))
        for x in xs
        for y in ys
        if domain.signed_distance(np.array([x, y])) < -1e-9
    ]
    return pts


def _region_points(config):
    """Probe points of K: center plus a compass ring at 3/4 radius."""
    cx, cy = config.region_center
    rr = 0.75 * config.region_radius
    return [
        (cx, cy),
        (cx + rr, cy),
        (cx - rr, cy),
        (cx, cy + rr),
        (cx, cy - rr),
    ]


def _grid_max(times, reached, n_paths, points, eps, what):
    """Max of per-point censored means plus the argmax standard error."""
    best, best_se = -math.inf, math.nan
    for j, p in enumerate(points):
        cell = slice(j * n_paths, (j + 1) * n_paths)
        cen = 1.0 - float(np.mean(reached[cell]))
        if cen > CENSOR_LIMIT:
            raise CensoringDominates(
                f"{what} at eps={eps}, x0={tuple(p)}: {100 * cen:.0f}% censored"
            )
        m = float(times[cell].mean())
        if m > best:
            best = m
            best_se = float(times[cell].std(ddof=1) / math.sqrt(n_paths))
    return best, best_se


def renewal_bound(config, seed):
    """Per-eps renewal rows (S_hat, R0_hat, bound) from grid maxima.

    S_hat: max over the start lattice of the mean first-jump time (A2);
    R0_hat: max over probe points of K of the jump-process MFPT to the
    target (A3); bound = S_hat/alpha0 + R0_hat with a conservative additive
    standard error.
    """
    if config.measure is None:
        raise ValueError("renewal_bound needs a restart measure")
    alpha0 = config.alpha0
    rows = []
    for i_eps, eps in enumerate(config.eps_grid):
        domain = config.domain(eps)
        config.measure.validate_support(domain)
        lattice = start_grid(config, eps)
        starts = np.repeat(np.asarray(lattice, dtype=float), config.n_paths, axis=0)
        rng = np.random.default_rng([seed, 101, i_eps])
        tau1, fired = _first_jump_times(
            domain, config.measure, starts, config.h, config.t_max, rng
        )
        s_hat, s_se = _grid_max(
            tau1, fired, config.n_paths, lattice, eps, "first-jump time"
        )
        probes = _region_points(config)
        for p in probes:
            _check_start(domain, p)
        kstarts = np.repeat(np.asarray(probes, dtype=float), config.n_paths, axis=0)
        rng = np.random.default_rng([seed, 202, i_eps])
        times, reached = _hit_times(
            domain,
            config.measure,
            kstarts,
            config.target_center,
            [config.target_radius],
            config.h,
            config.t_max,
            rng,
        )
        r0_hat, r0_se = _grid_max(
            times[0], reached[0], config.n_paths, probes, eps, "return time"
        )
        rows.append(
            RenewalRow(
                float(eps),
                s_hat,
                s_se,
                r0_hat,
                r0_se,
                alpha0,
                bound_from(s_hat, r0_hat, alpha0),
                s_se / alpha0 + r0_se,
            )
        )
    return rows


def sup_mfpt_jump(config, seed):
    """Per-eps (eps, M_hat, se): lattice max of the jump MFPT.

    Only uncensored cells enter the max (censored rows are lower bounds and
    are excluded from bound comparisons); fully censored lattices raise
    CensoringDominates through the cell gate.
    """
    if config.measure is None:
        raise ValueError("sup_mfpt_jump needs a restart measure")
    out = []
    for i_eps, eps in enumerate(config.eps_grid):
        lattice = start_grid(config, eps)
        sub = replace(config, eps_grid=(eps,))
        derived = int(np.random.SeedSequence([seed, 303, i_eps]).generate_state(1)[0])
        rows = mfpt_jump(sub, lattice, derived)
        valid = [r for r in rows if r.valid]
        if not valid:
            raise CensoringDominates(f"no uncensored lattice cell at eps={eps}")
        best = max(valid, key=lambda r: r.mfpt)
        out.append((float(eps), best.mfpt, best.std_error))
    return out
