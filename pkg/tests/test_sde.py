import math
from types import SimpleNamespace

import numpy as np
import pytest
from scipy import stats

from elastic_jump.geometry import Disk, HalfLine, Interval, NotOnBoundary
from elastic_jump.measures import FiniteMixtureOfPointMasses, PointMass, UniformOnBall
from elastic_jump.sde import (
    GridTooCoarse,
    JumpClock,
    StepTooLarge,
    boundary_condition_residual,
    elastic_functional,
    jump_statistics,
    occupation_histogram,
    semigroup_estimate,
    simulate_path,
    step_reflected,
)

ROOT_2_OVER_PI = math.sqrt(2 / math.pi)


def const_zero(x):
    return np.zeros(np.asarray(x).shape[0])


def const_one(x):
    return np.ones(np.asarray(x).shape[0])


# ---------------------------------------------------------------- stepping


def test_interior_steps_accrue_no_local_time():
    dom = Interval(0.0, 1.0)
    rng = np.random.default_rng(0)
    for _ in range(1000):
        x, dl = step_reflected(dom, 0.5, 1e-4, rng)
        assert dl == 0.0
        assert 0.0 <= x <= 1.0


def test_halfline_mean_local_time_matches_reflection_principle():
    # E[L_1] for reflected BM started at the barrier is E|B_1| = sqrt(2/pi).
    # Estimated through the elastic functional with kappa=0, f=0, c=1, whose
    # value is then exactly E[L_t].  h small enough that the O(sqrt(h))
    # scheme bias (~0.0026) sits well inside the 3-sigma band (~0.008).
    res = elastic_functional(
        const_zero, HalfLine(), 0.0, lambda s: 1.0, 0.0, 1.0,
        n_paths=50_000, h=2e-5, seed=101,
    )
    assert abs(res.mean - ROOT_2_OVER_PI) < 3 * res.std_error
    assert res.std_error < 5e-3


def test_disk_center_short_horizon_never_touches_boundary():
    res = elastic_functional(
        const_zero, Disk((0.0, 0.0), 1.0), 0.0, lambda s: 1.0, (0.0, 0.0), 0.01,
        n_paths=100_000, h=1e-4, seed=7,
    )
    assert res.mean == 0.0
    assert res.std_error == 0.0


# ---------------------------------------------------------------- paths


def test_jump_clock_increments_reproducible():
    clock = JumpClock(2.0)
    rng = np.random.default_rng(5)
    levels = [clock.advance(rng) for _ in range(6)]
    assert np.all(np.diff(levels) > 0)
    assert np.allclose(clock.thresholds, np.cumsum(clock.increments))
    clock2 = JumpClock(2.0)
    rng2 = np.random.default_rng(5)
    assert [clock2.advance(rng2) for _ in range(6)] == levels


def test_simulate_path_record_invariants():
    dom = Interval(0.0, 1.0)
    mu = PointMass(0.5, 1.0)
    rec = simulate_path(dom, mu, 0.5, T=5.0, h=1e-3, rng=np.random.default_rng(42))
    L = rec.local_time
    assert L[0] == 0.0
    assert np.all(np.diff(L) >= 0)
    assert np.all((rec.positions >= 0.0) & (rec.positions <= 1.0))
    assert np.all(np.diff(rec.jump_steps) > 0)
    assert rec.jump_count == len(rec.restart_points)
    assert np.all(rec.restart_points == 0.5)
    assert rec.jump_count > 0  # T=5 with kappa=1 jumps with prob ~1
    # L increases only on steps launched from near the boundary
    inc_steps = np.flatnonzero(np.diff(L) > 0) + 1
    pre = rec.positions[inc_steps - 1]
    dist = np.minimum(pre, 1.0 - pre)
    assert np.all(dist < 7 * math.sqrt(1e-3))
    # jump flags line up with recorded steps
    assert np.array_equal(np.flatnonzero(rec.jump_flags), rec.jump_steps)


def test_simulate_path_no_jumps_on_tiny_horizon():
    rec = simulate_path(
        Interval(0.0, 1.0), PointMass(0.5), 0.5, T=0.01, h=1e-4,
        rng=np.random.default_rng(1),
    )
    assert rec.jump_count == 0
    assert rec.local_time[-1] == 0.0


def test_simulate_path_bit_identical_reruns():
    args = (Interval(0.0, 1.0), PointMass(0.5), 0.3)
    a = simulate_path(*args, T=2.0, h=1e-3, rng=np.random.default_rng(9))
    b = simulate_path(*args, T=2.0, h=1e-3, rng=np.random.default_rng(9))
    assert np.array_equal(a.positions, b.positions)
    assert np.array_equal(a.local_time, b.local_time)
    assert np.array_equal(a.jump_steps, b.jump_steps)


def test_simulate_path_step_too_large():
    with pytest.raises(StepTooLarge):
        simulate_path(
            Interval(0.0, 1.0), PointMass(0.5), 0.5, T=0.01, h=0.02,
            rng=np.random.default_rng(0),
        )


def bootstrap_sigma(stat, arrays, n_boot=400, seed=3):
    rng = np.random.default_rng(seed)
    n = len(arrays[0])
    vals = []
    for _ in range(n_boot):
        idx = rng.integers(0, n, n)
        vals.append(stat(*(a[idx] for a in arrays)))
    return float(np.std(vals, ddof=1))


def test_conditional_poisson_variance_identity():
    # The threshold clock is independent of the Brownian driver, so the
    # count of clock levels below a jump-free path's local time is mixed
    # Poisson: Var N = kappa E L + kappa^2 Var L.
    kappa = 1.0
    _, _, n0, L = jump_statistics(
        Interval(0.0, 1.0), PointMass(0.5, 1e-12), 0.5, T=5.0, h=1e-3,
        seed=77, n_paths=4000,
    )
    assert n0.sum() == 0  # negligible mass: no restarts, L is reflected-only
    N = np.random.default_rng(99).poisson(kappa * L)
    stat = lambda n, l: n.var(ddof=1) - kappa * l.mean() - kappa**2 * l.var(ddof=1)
    assert abs(stat(N, L)) < 3 * bootstrap_sigma(stat, (N, L))


def test_jump_count_feedback():
    # With restarts enabled the count feeds back into L (interior restarts
    # slow local-time accrual), so only the compensator mean identity
    # E N = kappa E L survives; the mixed-Poisson variance formula
    # overpredicts, and measurably so.
    kappa = 1.0
    _, _, N, L = jump_statistics(
        Interval(0.0, 1.0), PointMass(0.5, kappa), 0.5, T=5.0, h=1e-3,
        seed=77, n_paths=4000,
    )
    d = N - kappa * L
    assert abs(d.mean()) < 3 * d.std(ddof=1) / math.sqrt(len(d))
    stat = lambda n, l: n.var(ddof=1) - kappa * l.mean() - kappa**2 * l.var(ddof=1)
    assert stat(N, L) < -3 * bootstrap_sigma(stat, (N, L))


def test_local_time_scheme_convergence_order():
    # Coupled-refinement estimate of the O(sqrt(h)) bias of the projection
    # local time on the half-line: the same Brownian increments drive walks
    # at h, 2h and 4h, so the E[L] differences isolate the h-dependence.
    n_paths, n_fine = 20_000, 4000
    h_fine = 1.0 / n_fine
    rng = np.random.default_rng(2024)
    dw = rng.standard_normal((n_paths, n_fine)) * math.sqrt(h_fine)
    means = {}
    for factor in (1, 2, 4):
        steps = dw.reshape(n_paths, n_fine // factor, factor).sum(axis=2)
        x = np.zeros(n_paths)
        L = np.zeros(n_paths)
        for k in range(n_fine // factor):
            prop = x + steps[:, k]
            x = np.maximum(prop, 0.0)
            L += x - prop
        means[factor * h_fine] = L.mean()
    hs = sorted(means)  # [2.5e-4, 5e-4, 1e-3]
    d1 = means[hs[0]] - means[hs[1]]
    d2 = means[hs[1]] - means[hs[2]]
    assert d1 > 0 and d2 > 0  # finer h recovers more local time
    order = math.log2(d2 / d1)
    assert order >= 0.4


# ---------------------------------------------------------------- estimators


def test_semigroup_preserves_constants_exactly():
    res = semigroup_estimate(
        const_one, Interval(0.0, 1.0), PointMass(0.5), 0.5, 0.5,
        n_paths=2000, h=1e-3, seed=0,
    )
    assert res.mean == 1.0
    assert res.std_error == 0.0


def test_semigroup_positive_and_bounded():
    f = lambda x: x**2
    res = semigroup_estimate(
        f, Interval(0.0, 1.0), PointMass(0.5), 0.25, 0.3,
        n_paths=4000, h=1e-3, seed=1,
    )
    assert res.mean >= 0.0
    assert abs(res.mean) <= 1.0 + 3 * res.std_error


def test_semigroup_short_time_martingale():
    res = semigroup_estimate(
        lambda x: x, Interval(0.0, 1.0), PointMass(0.5), 0.5, 0.01,
        n_paths=20_000, h=1e-4, seed=2,
    )
    assert abs(res.mean - 0.5) < 3 * res.std_error


def test_semigroup_multi_time_deterministic_and_consistent():
    f = lambda x: x
    args = (f, Interval(0.0, 1.0), PointMass(0.5), 0.25)
    multi = semigroup_estimate(*args, [0.05, 0.2], n_paths=20_000, h=1e-3, seed=5)
    multi2 = semigroup_estimate(*args, [0.05, 0.2], n_paths=20_000, h=1e-3, seed=5)
    assert [r.mean for r in multi] == [r.mean for r in multi2]
    single = semigroup_estimate(*args, 0.2, n_paths=20_000, h=1e-3, seed=6)
    gap = abs(multi[1].mean - single.mean)
    assert gap < 4 * math.hypot(multi[1].std_error, single.std_error)


def test_semigroup_seed_independence_within_noise():
    f = lambda x: np.sin(3 * x)
    a = semigroup_estimate(
        f, Interval(0.0, 1.0), PointMass(0.5), 0.5, 0.1, n_paths=10_000, h=1e-3, seed=10
    )
    b = semigroup_estimate(
        f, Interval(0.0, 1.0), PointMass(0.5), 0.5, 0.1, n_paths=10_000, h=1e-3, seed=11
    )
    assert abs(a.mean - b.mean) < 4 * math.hypot(a.std_error, b.std_error)


def test_elastic_total_probability_is_exact():
    # f = 1, c = kappa: survival and restarted mass recombine pathwise
    for kappa, seed in ((1.0, 3), (2.5, 4)):
        res = elastic_functional(
            const_one, Interval(0.0, 1.0), kappa, lambda s: kappa, 0.3, 0.5,
            n_paths=5000, h=1e-3, seed=seed,
        )
        assert abs(res.mean - 1.0) < 1e-12
        assert res.std_error < 1e-12


def test_elastic_kappa_zero_matches_neumann_series():
    # kappa=0, c=0 reduces to the reflected semigroup; cos(pi x) is a
    # Neumann eigenfunction on (0,1) with eigenvalue pi^2/2 under (1/2)Lap
    f = lambda x: np.cos(np.pi * x)
    t, x = 0.2, 0.3
    res = elastic_functional(
        f, Interval(0.0, 1.0), 0.0, lambda s: 0.0, x, t,
        n_paths=20_000, h=1e-4, seed=8,
    )
    exact = math.exp(-0.5 * math.pi**2 * t) * math.cos(math.pi * x)
    assert abs(res.mean - exact) < 3 * res.std_error


def test_elastic_grid_gate():
    c = SimpleNamespace(times=np.linspace(0.0, 1.0, 6), values=np.full(6, 1.0))
    with pytest.raises(GridTooCoarse):
        elastic_functional(
            const_one, Interval(0.0, 1.0), 1.0, c, 0.5, 0.5,
            n_paths=10, h=1e-4, seed=0,
        )
    fine = SimpleNamespace(times=np.linspace(0.0, 1.0, 2001), values=np.full(2001, 1.0))
    res = elastic_functional(
        const_one, Interval(0.0, 1.0), 1.0, fine, 0.5, 0.5,
        n_paths=10, h=1e-3, seed=0,
    )
    assert abs(res.mean - 1.0) < 1e-12


def test_elastic_rejects_short_c_grid():
    c = SimpleNamespace(times=np.linspace(0.0, 0.2, 201), values=np.full(201, 1.0))
    with pytest.raises(ValueError):
        elastic_functional(
            const_one, Interval(0.0, 1.0), 1.0, c, 0.5, 0.5,
            n_paths=10, h=1e-3, seed=0,
        )


# ---------------------------------------------------------------- boundary residual


def test_boundary_residual_constant_is_zero():
    pair = (const_one, const_zero)
    mu = PointMass(0.5, 1.0)
    assert boundary_condition_residual(pair, Interval(0.0, 1.0), mu, 0.0) == 0.0


def test_boundary_residual_linear_example():
    pair = (lambda x: x, const_one)
    mu = PointMass(0.5, 1.0)
    res = boundary_condition_residual(pair, Interval(0.0, 1.0), mu, 0.0)
    assert res == pytest.approx(1.5, abs=1e-14)


def test_boundary_residual_symbolic_oracle():
    import sympy as sp

    xs = sp.symbols("x")
    omega, kappa = 1.3, 0.7
    expr = sp.cos(omega * xs) + (kappa / omega) * sp.sin(omega * xs)
    f_np = sp.lambdify(xs, expr, "numpy")
    g_np = sp.lambdify(xs, sp.diff(expr, xs), "numpy")
    mu = FiniteMixtureOfPointMasses((0.3, 0.6), (0.4, 0.3))
    for q, n in ((0.0, 1.0), (1.0, -1.0)):
        got = boundary_condition_residual((f_np, g_np), Interval(0.0, 1.0), mu, q)
        want = float(
            n * g_np(q) + 0.4 * (f_np(0.3) - f_np(q)) + 0.3 * (f_np(0.6) - f_np(q))
        )
        assert got == pytest.approx(want, abs=1e-13)


def test_boundary_residual_interior_point_rejected():
    pair = (const_one, const_zero)
    with pytest.raises(NotOnBoundary):
        boundary_condition_residual(pair, Interval(0.0, 1.0), PointMass(0.5), 0.4)


# ---------------------------------------------------------------- occupation


def test_occupation_histogram_normalized_density():
    hist = occupation_histogram(
        Interval(0.0, 1.0), PointMass(0.5, 1.0), 0.5, T=5.0, burn_in=0.5,
        h=1e-3, seed=12, bins=40, n_paths=20,
    )
    widths = np.diff(hist.edges)
    assert np.dot(hist.density, widths) == pytest.approx(1.0, abs=1e-12)
    assert hist.n_samples > 0


def test_occupation_mass_concentrates_with_large_kappa():
    # more frequent restarts at 0.5 pile occupation mass near 0.5
    masses = {}
    for kappa in (0.5, 8.0):
        hist = occupation_histogram(
            Interval(0.0, 1.0), PointMass(0.5, kappa), 0.5, T=20.0, burn_in=2.0,
            h=1e-3, seed=13, bins=20, n_paths=30,
        )
        widths = np.diff(hist.edges)
        centers = 0.5 * (hist.edges[:-1] + hist.edges[1:])
        sel = np.abs(centers - 0.5) < 0.1
        masses[kappa] = np.dot(hist.density[sel], widths[sel])
    assert masses[8.0] > masses[0.5]


# ---------------------------------------------------------------- jump statistics


def test_inter_jump_increments_and_restarts_ks():
    kappa = 0.5
    mu = UniformOnBall(0.5, 0.3, kappa)  # uniform on (0.2, 0.8), mass 0.5
    incs, restarts, N, L = jump_statistics(
        Interval(0.0, 1.0), mu, 0.5, T=40.0, h=1e-4, seed=21, n_paths=150,
    )
    assert len(incs) >= 2000
    p_exp = stats.kstest(incs, "expon", args=(0.0, 1.0 / kappa)).pvalue
    assert p_exp > 0.01
    p_restart = stats.kstest(restarts, mu.cdf).pvalue
    assert p_restart > 0.01
