"""Reflected Brownian paths with local-time-triggered interior restarts.

The process is built by the threshold construction: an Euler-Skorokhod
reflected walk accumulates its projection displacements as boundary local
time L, and the position restarts from mu/kappa whenever L crosses the next
level of a cumulative Exp(kappa) clock.  If several levels are crossed in
one step only the first restart executes; the clock is re-checked on the
following step (the restart point is interior, so L cannot advance again
within the same step).

Estimators run vectorized path ensembles in fixed-size blocks and are a
pure function of (seed, n_paths, h): identical inputs give bit-identical
output.  Test functions f must be vectorized, mapping an (n,) array (1-d
domains) or an (n, 2) array to an (n,) array.

Two reflection steppers are available.  Pathwise quantities (simulate_path,
occupation and jump statistics) use projection, whose displacement sum is
the discrete Skorokhod decomposition of the sampled skeleton.  The
expectation estimators semigroup_estimate and elastic_functional default to
the bridge step, which draws the within-step boundary excursion from the
Brownian bridge maximum: projection parks exited paths on the boundary (an
O(sqrt(h)) occupation layer that biases E[f(X_t)] at half order) and misses
sub-step excursions (running the local-time clock slow by the same order),
while the bridge step is exact in law per step on flat boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import PROJ_TOL

# paths per vectorized block; fixed so chunking never depends on data
BLOCK_SIZE = 20000


class StepTooLarge(Exception):
    """Time step exceeds the simulation horizon."""


class GridTooCoarse(Exception):
    """The c(t) grid is too coarse relative to the path time step."""


@dataclass(frozen=True)
class PathRecord:
    """One realized path on a uniform time grid.

    positions[k] is the post-restart location at time k*h; local_time is the
    accumulated projection displacement (restarts do not change it).
    """

    times: np.ndarray
    positions: np.ndarray
    local_time: np.ndarray
    jump_steps: np.ndarray
    restart_points: np.ndarray

    @property
    def jump_times(self):
        return self.times[self.jump_steps]

    @property
    def jump_count(self):
        return int(len(self.jump_steps))

    @property
    def jump_flags(self):
        flags = np.zeros(len(self.times), dtype=bool)
        flags[self.jump_steps] = True
        return flags


@dataclass
class JumpClock:
    """Cumulative Exp(kappa) local-time levels ell_1 < ell_2 < ..."""

    kappa: float
    increments: list = field(default_factory=list)

    def advance(self, rng):
        """Draw the next increment; returns the new cumulative level."""
        self.increments.append(rng.exponential(1.0 / self.kappa))
        return float(np.sum(self.increments))

    @property
    def thresholds(self):
        return np.cumsum(self.increments)


@dataclass(frozen=True)
class EstimatorResult:
    mean: float
    std_error: float
    n_paths: int
    seed: int


@dataclass(frozen=True)
class OccupationHistogram:
    edges: np.ndarray
    density: np.ndarray
    n_samples: int


def _check_inside(domain, x0):
    if domain.dimension == 1:
        sd = domain.signed_distance(float(x0))
    else:
        sd = domain.signed_distance(np.asarray(x0, dtype=float))
    if sd > PROJ_TOL:
        raise ValueError(f"start point {x0!r} lies outside the closed domain")


def step_reflected(domain, position, h, rng):
    """One Euler step with Skorokhod projection.

    Returns (new_position, local-time increment).  The increment is the
    projection displacement length, zero when the proposal stays inside.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    s = math.sqrt(h)
    if domain.dimension == 1:
        prop = np.asarray([float(position) + s * rng.standard_normal()])
        proj, disp = domain.project_block(prop, rng)
        return float(proj[0]), float(disp[0])
    prop = np.asarray(position, dtype=float) + s * rng.standard_normal(2)
    proj, disp = domain.project_block(prop[None, :], rng)
    return proj[0], float(disp[0])


def simulate_path(domain, measure, x0, T, h, rng):
    """Reference single-path simulator; returns a full PathRecord."""
    if h > T:
        raise StepTooLarge(f"h={h} exceeds horizon T={T}")
    _check_inside(domain, x0)
    measure.validate_support(domain)
    kappa = measure.total_mass
    n = int(round(T / h))
    dim = domain.dimension
    times = np.arange(n + 1) * h
    positions = np.empty(n + 1) if dim == 1 else np.empty((n + 1, 2))
    local_time = np.zeros(n + 1)
    positions[0] = x0
    clock = JumpClock(kappa)
    threshold = clock.advance(rng)
    jump_steps, restarts = [], []
    x = float(x0) if dim == 1 else np.asarray(x0, dtype=float)
    L = 0.0
    for k in range(1, n + 1):
        x, dl = step_reflected(domain, x, h, rng)
        L += dl
        if L >= threshold:
            x = measure.sample(rng)
            jump_steps.append(k)
            restarts.append(x)
            threshold = clock.advance(rng)
        positions[k] = x
        local_time[k] = L
    restarts = np.asarray(restarts, dtype=float)
    if restarts.size == 0:
        restarts = restarts.reshape((0,) if dim == 1 else (0, 2))
    return PathRecord(times, positions, local_time, np.asarray(jump_steps, dtype=int), restarts)


def _noise(rng, n, dim, scale):
    if dim == 1:
        return scale * rng.standard_normal(n)
    return scale * rng.standard_normal((n, 2))


def _stepper(domain, scheme, h):
    if scheme == "projection":
        return lambda pos, noise, rng: domain.project_block(pos + noise, rng)
    if scheme == "bridge":
        return lambda pos, noise, rng: domain.bridge_step(pos, noise, h, rng)
    raise ValueError(f"unknown reflection scheme {scheme!r}")


def _jump_ensemble(
    domain,
    measure,
    x0,
    n_steps,
    h,
    rng,
    n_paths,
    snapshot_steps=(),
    hist=None,
    collect_jump_stats=False,
    scheme="projection",
):
    """March a restart-process ensemble; shared workhorse for estimators.

    hist: optional (edges, first_step, stride) for 1-d occupation counts.
    Returns a dict with per-snapshot position blocks, final L, per-path jump
    counts, and (optionally) pooled inter-jump L increments / restart points.
    """
    kappa = measure.total_mass
    dim = domain.dimension
    s = math.sqrt(h)
    step = _stepper(domain, scheme, h)
    snap_set = set(int(k) for k in snapshot_steps)
    snaps = {k: [] for k in snap_set}
    counts = None
    if hist is not None:
        edges, hist_start, hist_stride = hist
        if dim != 1:
            raise NotImplementedError("occupation histograms are 1-d only")
        counts = np.zeros(len(edges) - 1, dtype=np.int64)
        lo, hi = edges[0], edges[-1]
        inv = (len(edges) - 1) / (hi - lo)
        n_sampled = 0
    incs, restarts = [], []
    finals, final_L, jump_counts = [], [], []
    done = 0
    while done < n_paths:
        b = min(BLOCK_SIZE, n_paths - done)
        if dim == 1:
            pos = np.full(b, float(x0))
        else:
            pos = np.tile(np.asarray(x0, dtype=float), (b, 1))
        L = np.zeros(b)
        thr = rng.exponential(1.0 / kappa, b)
        prev_jump_L = np.zeros(b)
        n_jumps = np.zeros(b, dtype=np.int64)
        for k in range(1, n_steps + 1):
            pos, dl = step(pos, _noise(rng, b, dim, s), rng)
            L += dl
            crossed = L >= thr
            if crossed.any():
                idx = np.flatnonzero(crossed)
                z = measure.sample(rng, idx.size)
                if collect_jump_stats:
                    incs.append(L[idx] - prev_jump_L[idx])
                    prev_jump_L[idx] = L[idx]
                    restarts.append(np.atleast_1d(z))
                pos[idx] = z
                thr[idx] += rng.exponential(1.0 / kappa, idx.size)
                n_jumps[idx] += 1
            if k in snap_set:
                snaps[k].append(pos.copy())
            if counts is not None and k >= hist_start and (k - hist_start) % hist_stride == 0:
                bins = np.clip(((pos - lo) * inv).astype(np.int64), 0, len(counts) - 1)
                counts += np.bincount(bins, minlength=len(counts))
                n_sampled += b
        finals.append(pos)
        final_L.append(L)
        jump_counts.append(n_jumps)
        done += b
    out = {
        "final_positions": np.concatenate(finals),
        "final_L": np.concatenate(final_L),
        "jump_counts": np.concatenate(jump_counts),
        "snapshots": {k: np.concatenate(v) for k, v in snaps.items()},
    }
    if counts is not None:
        out["hist_counts"] = counts
        out["hist_samples"] = n_sampled
    if collect_jump_stats:
        out["increments"] = np.concatenate(incs) if incs else np.empty(0)
        out["restart_points"] = (
            np.concatenate(restarts) if restarts else np.empty((0,) if dim == 1 else (0, 2))
        )
    return out


def _t_steps(t_list, h):
    steps = []
    for t in t_list:
        k = int(round(t / h))
        if k < 1:
            raise StepTooLarge(f"h={h} exceeds requested time t={t}")
        steps.append(k)
    return steps


def _as_t_list(t):
    if np.isscalar(t):
        return [float(t)], True
    return [float(v) for v in t], False


def _result(values, seed):
    values = np.asarray(values, dtype=float)
    n = len(values)
    sd = values.std(ddof=1) if n > 1 else 0.0
    return EstimatorResult(float(values.mean()), float(sd / math.sqrt(n)), n, seed)


def semigroup_estimate(f, domain, measure, x, t, n_paths, h, seed, scheme="bridge"):
    """Monte Carlo E_x[f(X_t)] for the restart process.

    t may be a scalar or a sequence (one ensemble, snapshots at each time);
    returns an EstimatorResult or a list in the same order.  The bridge
    step is the default: it estimates expectations at weak order one, where
    projection carries an O(sqrt(h)) boundary-layer bias.
    """
    t_list, scalar = _as_t_list(t)
    _check_inside(domain, x)
    measure.validate_support(domain)
    steps = _t_steps(t_list, h)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    out = _jump_ensemble(
        domain, measure, x, max(steps), h, rng, n_paths,
        snapshot_steps=steps, scheme=scheme,
    )
    results = [_result(f(out["snapshots"][k]), seed) for k in steps]
    return results[0] if scalar else results


def _c_evaluator(c, h):
    """Interpolator for c(t) plus grid-resolution gate."""
    if callable(c) and not hasattr(c, "times"):
        return c, math.inf
    times = np.asarray(c.times, dtype=float)
    values = np.asarray(c.values, dtype=float)
    spacing = float(np.max(np.diff(times)))
    if spacing > h * 1e3:
        raise GridTooCoarse(
            f"c grid spacing {spacing:.3g} exceeds {h * 1e3:.3g} (h*1e3)"
        )
    return (lambda s: float(np.interp(s, times, values))), float(times[-1])


def elastic_functional(f, domain, kappa, c, x, t, n_paths, h, seed, scheme="bridge"):
    """Monte Carlo for the elastic representation (reflected paths only).

    Estimates E_x[e^{-kappa L_t} f(B_t)] + E_x[int_0^t e^{-kappa L_s} c(t-s) dL_s].
    The dL integral is accumulated per step, with the e^{-kappa L} factor
    integrated exactly across each step's L increment so that constants are
    preserved to round-off.  c is a CtSolution-like object (uniform .times /
    .values grid) or a plain callable.  Defaults to the bridge step for the
    same weak-order reason as semigroup_estimate.
    """
    t_list, scalar = _as_t_list(t)
    _check_inside(domain, x)
    c_eval, horizon = _c_evaluator(c, h)
    for t_i in t_list:
        if t_i > horizon + 1e-9:
            raise ValueError(f"c grid ends at {horizon}, below requested t={t_i}")
    steps = _t_steps(t_list, h)
    n_max = max(steps)
    dim = domain.dimension
    s = math.sqrt(h)
    step = _stepper(domain, scheme, h)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    values = [[] for _ in t_list]
    done = 0
    while done < n_paths:
        b = min(BLOCK_SIZE, n_paths - done)
        if dim == 1:
            pos = np.full(b, float(x))
        else:
            pos = np.tile(np.asarray(x, dtype=float), (b, 1))
        L = np.zeros(b)
        integral = np.zeros((len(t_list), b))
        for k in range(1, n_max + 1):
            pos, dl = step(pos, _noise(rng, b, dim, s), rng)
            hit = dl > 0
            if hit.any():
                idx = np.flatnonzero(hit)
                if kappa > 0:
                    pre = np.exp(-kappa * L[idx])
                    post = np.exp(-kappa * (L[idx] + dl[idx]))
                    w = (pre - post) / kappa
                else:
                    w = dl[idx]
                sk = k * h
                for i, (t_i, k_i) in enumerate(zip(t_list, steps)):
                    if k <= k_i:
                        integral[i, idx] += c_eval(t_i - sk) * w
                L[idx] += dl[idx]
            for i, k_i in enumerate(steps):
                if k == k_i:
                    term1 = np.exp(-kappa * L) * f(pos) if kappa > 0 else f(pos)
                    values[i].append(term1 + integral[i])
        done += b
    results = [_result(np.concatenate(v), seed) for v in values]
    return results[0] if scalar else results


def boundary_condition_residual(f_and_grad, domain, measure, q):
    """Residual of the nonlocal Robin condition at a boundary point q.

    f_and_grad is a pair (f, grad_f) of vectorized callables; the residual
    is n(q).grad_f(q) + int (f(y) - f(q)) mu(dy) with n the inward normal.
    Zero residual (to quadrature tolerance) is the generator-domain membership
    test for f.
    """
    f, grad_f = f_and_grad
    n = domain.inward_normal(q)
    if domain.dimension == 1:
        qa = np.asarray([float(q)])
        dn = float(n) * float(np.asarray(grad_f(qa)).reshape(-1)[0])
        fq = float(np.asarray(f(qa)).reshape(-1)[0])
    else:
        qa = np.asarray(q, dtype=float)[None, :]
        g = np.asarray(grad_f(qa), dtype=float).reshape(2)
        dn = float(np.dot(n, g))
        fq = float(np.asarray(f(qa)).reshape(-1)[0])
    # floor=1: f is O(1) data, so a near-zero mean needs an absolute gate
    nonlocal_term = measure.integrate(f, floor=1.0) - measure.total_mass * fq
    return dn + nonlocal_term


def occupation_histogram(
    domain, measure, x0, T, burn_in, h, seed, bins, n_paths=1, sample_stride=1
):
    """Pooled normalized histogram of positions after burn-in.

    Positions are sampled every sample_stride steps once k*h > burn_in,
    pooled over n_paths independent paths.  1-d domains only.
    """
    if not T > burn_in:
        raise ValueError("need T > burn_in")
    if domain.dimension != 1:
        raise NotImplementedError("occupation histograms are 1-d only")
    _check_inside(domain, x0)
    measure.validate_support(domain)
    if np.isscalar(bins):
        a = getattr(domain, "a", None)
        b = getattr(domain, "b", None)
        if a is None or b is None:
            raise ValueError("integer bins need a bounded interval domain")
        edges = np.linspace(a, b, int(bins) + 1)
    else:
        edges = np.asarray(bins, dtype=float)
    n_steps = int(round(T / h))
    first = int(math.floor(burn_in / h)) + 1
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    out = _jump_ensemble(
        domain,
        measure,
        x0,
        n_steps,
        h,
        rng,
        n_paths,
        hist=(edges, first, sample_stride),
    )
    counts = out["hist_counts"]
    n_samples = out["hist_samples"]
    widths = np.diff(edges)
    density = counts / (n_samples * widths)
    return OccupationHistogram(edges, density, int(n_samples))


def jump_statistics(domain, measure, x0, T, h, seed, n_paths):
    """Pooled inter-jump local-time increments and restart points.

    Returns (increments, restart_points, jump_counts, final_L); increments
    should be Exp(kappa) and restart points mu/kappa distributed.
    """
    _check_inside(domain, x0)
    measure.validate_support(domain)
    n_steps = int(round(T / h))
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    out = _jump_ensemble(
        domain, measure, x0, n_steps, h, rng, n_paths, collect_jump_stats=True
    )
    return out["increments"], out["restart_points"], out["jump_counts"], out["final_L"]
