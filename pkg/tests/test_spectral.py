import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import eigh_tridiagonal
from scipy.special import jv, jvp

from elastic_jump.measures import PointMass, UniformOnBall
from elastic_jump.spectral import (
    CoefficientSet,
    HorizonExceeded,
    TailNotResolved,
    TruncationWarning,
    _product_weights,
    closed_form_transform,
    evaluate_solution,
    laplace_check,
    numerical_transform,
    project_coefficients,
    robin_eigenbasis_disk,
    robin_eigenbasis_interval,
    solve_volterra,
)

# first Robin frequencies, found once by high-precision bisection and frozen
OMEGA1_INTERVAL_K1 = 1.3065423742
OMEGA1_DISK_K1 = 1.2557837118


def one(x):
    x = np.asarray(x, dtype=float)
    return np.ones(x.shape[0] if x.ndim > 0 else ())


def sin_plus_one(x):
    return np.sin(np.pi * np.asarray(x, dtype=float)) + 1.0


# ------------------------------------------------------------------- interval


@pytest.mark.parametrize("kappa", [0.5, 1.0, 3.0])
def test_interval_root_equation(kappa):
    basis = robin_eigenbasis_interval(kappa, 20)
    for lam in basis.eigenvalues:
        w = math.sqrt(2 * lam)
        res = (w * w - kappa * kappa) * math.sin(w) - 2 * kappa * w * math.cos(w)
        assert abs(res) / w**2 < 1e-10


def test_interval_boundary_condition_residual():
    # phi'(0) = kappa phi(0) and phi'(1) = -kappa phi(1), via the analytic
    # derivative phi' = (-w sin(wx) + kappa cos(wx)) / norm
    kappa = 2.0
    basis = robin_eigenbasis_interval(kappa, 15)
    for phi in basis.eigenfunctions:
        w, n = phi.omega, phi.norm

        def dphi(x):
            return (-w * math.sin(w * x) + kappa * math.cos(w * x)) / n

        assert abs(dphi(0.0) - kappa * phi(0.0)) < 1e-7 * w
        assert abs(dphi(1.0) + kappa * phi(1.0)) < 1e-7 * w


def test_interval_frozen_ground_frequency():
    basis = robin_eigenbasis_interval(1.0, 1)
    assert math.sqrt(2 * basis.eigenvalues[0]) == pytest.approx(
        OMEGA1_INTERVAL_K1, abs=1e-9
    )


def test_interval_orthonormality():
    basis = robin_eigenbasis_interval(1.0, 30)
    nodes, weights = np.polynomial.legendre.leggauss(2000)
    x = 0.5 * (nodes + 1.0)
    wq = 0.5 * weights
    vals = np.stack([phi(x) for phi in basis.eigenfunctions])
    gram = vals @ (vals * wq).T
    assert np.max(np.abs(gram - np.eye(30))) < 1e-8


def test_interval_gamma_is_mode_mean():
    basis = robin_eigenbasis_interval(0.7, 25)
    nodes, weights = np.polynomial.legendre.leggauss(2000)
    x = 0.5 * (nodes + 1.0)
    wq = 0.5 * weights
    ints = np.array([float(np.dot(wq, phi(x))) for phi in basis.eigenfunctions])
    assert np.max(np.abs(ints - basis.gammas)) < 1e-10


def test_interval_neumann_limit():
    # kappa -> 0 degenerates to the Neumann basis: omega_1 -> sqrt(2 kappa),
    # higher frequencies -> (j-1) pi
    kappa = 1e-4
    basis = robin_eigenbasis_interval(kappa, 5)
    omegas = np.sqrt(2 * basis.eigenvalues)
    assert omegas[0] == pytest.approx(math.sqrt(2 * kappa), rel=1e-2)
    assert np.allclose(omegas[1:], np.pi * np.arange(1, 5), atol=1e-3)


def _interval_fd_eigenvalues(kappa, n_cells=500, k=5):
    """Second-order Robin closure with ghost nodes, half-weight mass at the
    endpoints so the operator stays symmetric tridiagonal."""
    d = 1.0 / n_cells
    diag = np.full(n_cells + 1, 1.0 / d**2)
    diag[0] = diag[-1] = (1.0 + d * kappa) / d**2
    off = np.full(n_cells, -0.5 / d**2)
    off[0] *= math.sqrt(2.0)
    off[-1] *= math.sqrt(2.0)
    return eigh_tridiagonal(
        diag, off, eigvals_only=True, select="i", select_range=(0, k - 1)
    )


@pytest.mark.parametrize("kappa", [0.5, 1.0, 3.0])
def test_interval_fd_oracle(kappa):
    basis = robin_eigenbasis_interval(kappa, 5)
    fd = _interval_fd_eigenvalues(kappa)
    assert np.max(np.abs(fd - basis.eigenvalues) / basis.eigenvalues) < 5e-3


def test_interval_eigenvalues_increasing():
    basis = robin_eigenbasis_interval(2.5, 40)
    assert np.all(np.diff(basis.eigenvalues) > 0)


# ----------------------------------------------------------------------- disk


def test_disk_root_equation():
    basis = robin_eigenbasis_disk(1.0, 40)
    for lam, phi in zip(basis.eigenvalues, basis.eigenfunctions):
        w = math.sqrt(2 * lam)
        assert abs(w * jvp(phi.m, w) + jv(phi.m, w)) < 1e-10 * max(1.0, w)


def test_disk_frozen_ground_frequency():
    basis = robin_eigenbasis_disk(1.0, 1)
    assert math.sqrt(2 * basis.eigenvalues[0]) == pytest.approx(
        OMEGA1_DISK_K1, abs=1e-8
    )


def test_disk_gamma_vanishes_off_radial():
    basis = robin_eigenbasis_disk(0.8, 40)
    for g, phi in zip(basis.gammas, basis.eigenfunctions):
        if phi.m > 0:
            assert g == 0.0
        else:
            assert abs(g) > 0


def test_disk_ground_mode_positive():
    basis = robin_eigenbasis_disk(1.0, 1)
    phi = basis.eigenfunctions[0]
    r = np.linspace(0.0, 0.999, 200)
    pts = np.column_stack([r, np.zeros_like(r)])
    assert np.all(phi(pts) > 0)


def test_disk_orthonormality():
    basis = robin_eigenbasis_disk(1.0, 25)
    nodes, weights = np.polynomial.legendre.leggauss(300)
    r = 0.5 * (nodes + 1.0)
    wr = 0.5 * weights
    nt = 256
    th = np.linspace(0.0, 2 * np.pi, nt, endpoint=False)
    R, T = np.meshgrid(r, th, indexing="ij")
    pts = np.column_stack([(R * np.cos(T)).ravel(), (R * np.sin(T)).ravel()])
    vals = np.stack([phi(pts).reshape(len(r), nt) for phi in basis.eigenfunctions])
    gram = np.einsum("irt,jrt,r->ij", vals, vals, wr * r) * (2 * np.pi / nt)
    assert np.max(np.abs(gram - np.eye(25))) < 1e-8


def _disk_radial_fd_eigenvalues(m, kappa, n_cells=2000, k=3):
    """Cell-centered flux form of -(1/2r)(r u')' + m^2/(2 r^2); the inner
    face flux vanishes at r=0, the outer face uses u'(1) = -kappa u(1)."""
    d = 1.0 / n_cells
    r = (np.arange(n_cells) + 0.5) * d
    rf = np.arange(n_cells + 1) * d
    diag = (rf[:-1] + rf[1:]) / (2 * d**2 * r) + m**2 / (2 * r**2)
    diag[-1] -= rf[-1] / (2 * d**2 * r[-1])
    diag[-1] += kappa / ((1 + kappa * d / 2) * 2 * d * r[-1])
    off = -rf[1:-1] / (2 * d**2 * np.sqrt(r[:-1] * r[1:]))
    return eigh_tridiagonal(
        diag, off, eigvals_only=True, select="i", select_range=(0, k - 1)
    )


@pytest.mark.parametrize("m", [0, 1, 2])
def test_disk_fd_oracle(m):
    kappa = 1.0
    basis = robin_eigenbasis_disk(kappa, 40)
    lams = [
        lam
        for lam, phi in zip(basis.eigenvalues, basis.eigenfunctions)
        if phi.m == m and phi.trig in ("one", "cos")
    ][:3]
    fd = _disk_radial_fd_eigenvalues(m, kappa)
    assert np.max(np.abs(fd[: len(lams)] - lams) / np.asarray(lams)) < 1e-2


def test_disk_cos_sin_pairs_degenerate():
    basis = robin_eigenbasis_disk(1.5, 30)
    lam_by_key = {}
    for lam, phi in zip(basis.eigenvalues, basis.eigenfunctions):
        lam_by_key.setdefault((phi.m, round(phi.omega, 9)), []).append(
            (phi.trig, lam)
        )
    for (m, _), entries in lam_by_key.items():
        if m == 0:
            assert [t for t, _ in entries] == ["one"]
        elif len(entries) == 2:
            (t1, l1), (t2, l2) = entries
            assert {t1, t2} == {"cos", "sin"} and l1 == l2


# --------------------------------------------------------------- coefficients


def test_project_constant_recovers_gammas_interval():
    basis = robin_eigenbasis_interval(1.0, 50)
    co = project_coefficients(one, PointMass(0.5, 1.0), basis)
    assert np.max(np.abs(co.f_coeffs - basis.gammas)) < 1e-10


def test_project_constant_recovers_gammas_disk():
    basis = robin_eigenbasis_disk(1.0, 20)
    co = project_coefficients(one, PointMass((0.3, 0.2), 1.0), basis)
    assert np.max(np.abs(co.f_coeffs - basis.gammas)) < 1e-9


def test_project_single_mode():
    basis = robin_eigenbasis_interval(1.0, 12)
    phi1 = basis.eigenfunctions[0]
    co = project_coefficients(lambda x: phi1(x), PointMass(0.5, 1.0), basis)
    expect = np.zeros(12)
    expect[0] = 1.0
    assert np.max(np.abs(co.f_coeffs - expect)) < 1e-8


def test_project_atom_alpha_exact():
    basis = robin_eigenbasis_interval(1.0, 10)
    mu = PointMass(0.4, 2.0)
    co = project_coefficients(one, mu, basis)
    expect = 2.0 * np.array([phi(0.4) for phi in basis.eigenfunctions])
    assert np.max(np.abs(co.alpha - expect)) < 1e-13


def test_project_continuous_measure_alpha():
    basis = robin_eigenbasis_interval(1.0, 30)
    mu = UniformOnBall(0.5, 0.3, weight=1.0)
    co = project_coefficients(one, mu, basis)
    # alpha_j = (1/0.6) int_{0.2}^{0.8} phi_j: closed form from the antiderivative
    for a, phi in zip(co.alpha, basis.eigenfunctions):
        w, k, n = phi.omega, phi.kappa, phi.norm
        F = lambda x: (math.sin(w * x) / w - (k / w) * math.cos(w * x) / w) / n
        assert a == pytest.approx((F(0.8) - F(0.2)) / 0.6, abs=1e-9)


def test_gamma_alpha_sum_near_kappa():
    # sum_j gamma_j alpha_j -> mu(D) as J grows (expansion of the constant)
    kappa = 1.0
    mu = PointMass(0.5, kappa)
    errs = []
    for J in (10, 25, 50):
        basis = robin_eigenbasis_interval(kappa, J)
        co = project_coefficients(one, mu, basis)
        errs.append(abs(np.dot(basis.gammas, co.alpha) - kappa))
    assert errs[-1] < 1e-3 and errs[0] > errs[-1]


# ------------------------------------------------------------------- Volterra


@given(
    lam=st.floats(1e-6, 1e6),
    dt=st.floats(1e-6, 1.0),
)
@settings(max_examples=200, deadline=None)
def test_product_weights_partition(lam, dt):
    # A + B = int_0^dt e^{-lam(dt-s)} ds exactly, so constants are preserved
    lam_arr = np.array([lam])
    E, A, B = _product_weights(lam_arr, dt)
    theta = lam * dt
    total = -math.expm1(-theta) / lam
    assert A[0] + B[0] == pytest.approx(total, rel=1e-12, abs=1e-300)
    assert 0 < B[0] <= A[0] + B[0]


def test_volterra_constant_data_interval():
    kappa = 1.0
    basis = robin_eigenbasis_interval(kappa, 50)
    co = project_coefficients(one, PointMass(0.5, kappa), basis)
    c = solve_volterra(basis, co, kappa, T=1.0, dt=1e-3)
    assert np.max(np.abs(c.values - kappa)) < 1e-3
    u = evaluate_solution(basis, co, c, 0.5, np.array([0.25, 0.5, 0.75]))
    assert np.max(np.abs(u - 1.0)) < 1e-3


def test_volterra_c0_equals_integral_of_f():
    kappa = 1.0
    basis = robin_eigenbasis_interval(kappa, 50)
    co = project_coefficients(sin_plus_one, PointMass(0.5, kappa), basis)
    c = solve_volterra(basis, co, kappa, T=0.5, dt=1e-3)
    assert c.values[0] == pytest.approx(float(np.dot(co.alpha, co.f_coeffs)))
    # ... and that sum is int f dmu = f(0.5) up to basis truncation
    assert c.values[0] == pytest.approx(2.0, abs=1e-3)


def test_volterra_max_principle():
    kappa = 1.0
    basis = robin_eigenbasis_interval(kappa, 50)
    co = project_coefficients(sin_plus_one, PointMass(0.5, kappa), basis)
    c = solve_volterra(basis, co, kappa, T=2.0, dt=1e-3)
    assert np.max(np.abs(c.values)) <= kappa * 2.0 + 1e-6


def test_volterra_integral_identity():
    # int u(t,.) dmu must reproduce c(t): the fixed point is consistent
    kappa = 1.0
    basis = robin_eigenbasis_interval(kappa, 50)
    mu = PointMass(0.5, kappa)
    co = project_coefficients(sin_plus_one, mu, basis)
    c = solve_volterra(basis, co, kappa, T=1.0, dt=1e-3)
    for t in (0.1, 0.5, 1.0):
        u_at_atom = evaluate_solution(basis, co, c, t, 0.5)
        ct = float(np.interp(t, c.times, c.values))
        assert abs(kappa * u_at_atom - ct) < 1e-4


def test_volterra_richardson_order():
    kappa = 1.0
    basis = robin_eigenbasis_interval(kappa, 50)
    co = project_coefficients(sin_plus_one, PointMass(0.5, kappa), basis)
    end = {}
    for dt in (4e-3, 2e-3, 1e-3):
        end[dt] = solve_volterra(basis, co, kappa, T=1.0, dt=dt).values[-1]
    order = math.log2(abs((end[4e-3] - end[2e-3]) / (end[2e-3] - end[1e-3])))
    assert 1.7 < order < 2.3


def test_volterra_rectangle_scheme_first_order():
    kappa = 1.0
    basis = robin_eigenbasis_interval(kappa, 40)
    co = project_coefficients(sin_plus_one, PointMass(0.5, kappa), basis)
    ref = solve_volterra(basis, co, kappa, T=0.5, dt=2.5e-4).values[-1]
    errs = []
    for dt in (4e-3, 2e-3, 1e-3):
        r = solve_volterra(basis, co, kappa, T=0.5, dt=dt, scheme="rectangle")
        errs.append(abs(r.values[-1] - ref))
    assert errs[0] > errs[1] > errs[2]
    assert errs[0] / errs[1] == pytest.approx(2.0, rel=0.3)
    assert errs[1] / errs[2] == pytest.approx(2.0, rel=0.3)


def test_volterra_rejects_coarse_grid():
    basis = robin_eigenbasis_interval(1.0, 10)
    co = project_coefficients(one, PointMass(0.5, 1.0), basis)
    with pytest.raises(ValueError, match="too coarse"):
        solve_volterra(basis, co, 1.0, T=1.0, dt=0.5)


def test_volterra_rejects_unknown_scheme():
    basis = robin_eigenbasis_interval(1.0, 10)
    co = project_coefficients(one, PointMass(0.5, 1.0), basis)
    with pytest.raises(ValueError, match="scheme"):
        solve_volterra(basis, co, 1.0, T=1.0, dt=1e-3, scheme="simpson")


def test_truncation_warning_fires_on_rough_data():
    basis = robin_eigenbasis_interval(1.0, 8)
    phi_last = basis.eigenfunctions[-1]
    co = project_coefficients(lambda x: phi_last(x), PointMass(0.5, 1.0), basis)
    with pytest.warns(TruncationWarning):
        solve_volterra(basis, co, 1.0, T=1.0, dt=1e-3)


def test_no_truncation_warning_on_smooth_data():
    basis = robin_eigenbasis_interval(1.0, 50)
    co = project_coefficients(one, PointMass(0.5, 1.0), basis)
    with warnings.catch_warnings():
        warnings.simplefilter("error", TruncationWarning)
        solve_volterra(basis, co, 1.0, T=1.0, dt=1e-3)


def test_zero_forcing_gives_zero_solution():
    basis = robin_eigenbasis_interval(1.0, 20)
    co = CoefficientSet(np.zeros(20), np.zeros(20))
    c = solve_volterra(basis, co, 1.0, T=1.0, dt=1e-3)
    assert np.all(c.values == 0.0)


# ----------------------------------------------------------------- evaluation


def test_evaluate_initial_data():
    kappa = 1.0
    basis = robin_eigenbasis_interval(kappa, 50)
    co = project_coefficients(sin_plus_one, PointMass(0.5, kappa), basis)
    c = solve_volterra(basis, co, kappa, T=0.5, dt=1e-3)
    x = np.array([0.2, 0.5, 0.9])
    u0 = evaluate_solution(basis, co, c, 0.0, x)
    assert np.max(np.abs(u0 - sin_plus_one(x))) < 1e-3


def test_evaluate_off_grid_matches_neighbors():
    kappa = 1.0
    basis = robin_eigenbasis_interval(kappa, 30)
    co = project_coefficients(sin_plus_one, PointMass(0.5, kappa), basis)
    c = solve_volterra(basis, co, kappa, T=0.5, dt=1e-3)
    lo = evaluate_solution(basis, co, c, 0.250, 0.3)
    mid = evaluate_solution(basis, co, c, 0.2505, 0.3)
    hi = evaluate_solution(basis, co, c, 0.251, 0.3)
    assert min(lo, hi) - 1e-6 <= mid <= max(lo, hi) + 1e-6


def test_evaluate_beyond_horizon_raises():
    basis = robin_eigenbasis_interval(1.0, 10)
    co = project_coefficients(one, PointMass(0.5, 1.0), basis)
    c = solve_volterra(basis, co, 1.0, T=0.5, dt=1e-3)
    with pytest.raises(HorizonExceeded):
        evaluate_solution(basis, co, c, 0.6, 0.5)


def test_pure_decay_when_restart_sees_nothing():
    # mu = delta at the disk center, data = an m=1 mode: alpha_j f_j = 0 for
    # every j, so c = 0 and u is a bare eigenmode decay
    kappa = 1.0
    basis = robin_eigenbasis_disk(kappa, 10)
    k1 = next(i for i, phi in enumerate(basis.eigenfunctions) if phi.m == 1)
    phi1 = basis.eigenfunctions[k1]
    lam1 = basis.eigenvalues[k1]
    co = project_coefficients(lambda p: phi1(p), PointMass((0.0, 0.0), kappa), basis)
    c = solve_volterra(basis, co, kappa, T=0.5, dt=1e-3)
    assert np.max(np.abs(c.values)) < 1e-9
    pt = np.array([0.4, 0.1])
    u = evaluate_solution(basis, co, c, 0.3, pt)
    assert u == pytest.approx(math.exp(-lam1 * 0.3) * float(phi1(pt)), abs=1e-8)


# -------------------------------------------------------------------- Laplace


def _sin_setup(J=50, T=20.0):
    kappa = 1.0
    basis = robin_eigenbasis_interval(kappa, J)
    co = project_coefficients(sin_plus_one, PointMass(0.5, kappa), basis)
    c = solve_volterra(basis, co, kappa, T=T, dt=1e-3)
    return kappa, basis, co, c


def test_laplace_transforms_agree():
    kappa, basis, co, c = _sin_setup()
    assert laplace_check(c, basis, co, kappa, [1.0, 2.0, 5.0]) < 1e-3


def test_laplace_short_horizon_raises():
    kappa = 1.0
    basis = robin_eigenbasis_interval(kappa, 20)
    co = project_coefficients(sin_plus_one, PointMass(0.5, kappa), basis)
    c = solve_volterra(basis, co, kappa, T=1.0, dt=1e-3)
    with pytest.raises(TailNotResolved):
        laplace_check(c, basis, co, kappa, [1.0])


def test_laplace_large_z_limit():
    # z c~(z) -> c(0) as z -> infinity
    kappa, basis, co, c = _sin_setup(J=40, T=5.0)
    z = 1e3
    val, _ = numerical_transform(c, basis, co, kappa, z)
    assert z * val == pytest.approx(c.values[0], rel=1e-2)
    assert z * closed_form_transform(co, basis, kappa, z) == pytest.approx(
        c.values[0], rel=1e-2
    )


def test_closed_form_constant_transform():
    # constant data: c = kappa, so c~(z) = kappa / z for every z
    kappa = 1.0
    basis = robin_eigenbasis_interval(kappa, 50)
    co = project_coefficients(one, PointMass(0.5, kappa), basis)
    # tolerance reflects J=50 truncation, which bites hardest at small z
    for z in (0.5, 1.0, 3.0):
        assert closed_form_transform(co, basis, kappa, z) == pytest.approx(
            kappa / z, rel=1e-3
        )
