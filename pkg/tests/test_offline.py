import math
import time
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mssmpc.lqr import solve_lqr, spectral_radius
from mssmpc.model import LinearSystem, Polytope, min_eig
from mssmpc.offline import (
    MU_GRID_SIZE,
    DesignInfeasible,
    certificate_beta,
    certify_convergence,
    check_certificate,
    design,
    design_input_shape,
    design_shape,
    prs_radius,
    rho_from_eps,
    select_lambda,
    verify_design,
)

from conftest import (
    BENCH_GAMMA,
    BENCH_LAMBDA,
    BENCH_P,
    BENCH_WX,
    boxes,
    double_integrator,
    ellipsoid_samples,
)


# radius calibration ------------------------------------------------------


def test_rho_examples():
    assert rho_from_eps(0.5, 2, "generic") == pytest.approx(2.0)
    assert rho_from_eps(0.1, 2, "gaussian") == pytest.approx(2.146, abs=1e-3)
    assert rho_from_eps(math.exp(-2.0), 2, "gaussian") == pytest.approx(2.0, abs=1e-9)


def test_rho_errors():
    for eps in (0.0, 1.0, 1.5, -0.1):
        with pytest.raises(ValueError):
            rho_from_eps(eps, 2)
    with pytest.raises(ValueError):
        rho_from_eps(0.1, 2, "laplace")


@settings(max_examples=50, deadline=None)
@given(e1=st.floats(0.01, 0.98), e2=st.floats(0.01, 0.98), n=st.integers(1, 5))
def test_rho_strictly_decreasing(e1, e2, n):
    if abs(e1 - e2) < 1e-6:
        return
    lo, hi = sorted((e1, e2))
    for fam in ("generic", "gaussian"):
        assert rho_from_eps(lo, n, fam) > rho_from_eps(hi, n, fam)


def test_prs_radius_examples():
    assert prs_radius(2.146, 0.7503, 0) == 0.0
    assert prs_radius(2.146, 0.7503, 500) == pytest.approx(2.146, abs=1e-10)
    assert prs_radius(2.146, 0.7503, 1) == pytest.approx(0.5359, abs=1e-4)
    r = prs_radius(2.0, 0.8, np.arange(50))
    assert np.all(np.diff(r) >= 0.0)
    with pytest.raises(ValueError):
        prs_radius(1.0, 0.5, -1)


# shapes ------------------------------------------------------------------


def _scalar(a, gamma):
    return LinearSystem([[a]], [[1.0]], [[gamma]])


def test_design_shape_examples():
    sys = LinearSystem(np.zeros((2, 2)), np.ones((2, 1)), np.eye(2))
    assert np.allclose(design_shape(sys, np.zeros((2, 2)), 0.5), 4.0 * np.eye(2))
    W = design_shape(_scalar(0.5, 1.0), [[0.5]], 0.8)
    assert W[0, 0] == pytest.approx(25.0 / (1.0 - 0.25 / 0.64), rel=1e-12)


def test_design_shape_contraction_error():
    with pytest.raises(ValueError, match="contraction infeasible"):
        design_shape(_scalar(0.5, 1.0), [[0.9]], 0.8)


def test_design_shape_on_benchmark_verifies():
    X, U = boxes()
    art = design(double_integrator(), X, U, np.eye(2), [[10.0]], eps=0.1, N=10,
                 lam=BENCH_LAMBDA, check_tol=1e-9)
    rep = verify_design(art)
    assert rep.passed
    assert rep["noise_absorption"].margin >= -1e-9


@settings(max_examples=40, deadline=None)
@given(lam=st.floats(0.66, 0.99))
def test_design_shape_satisfies_both_inequalities(lam):
    sys = double_integrator()
    A_K = solve_lqr(sys, np.eye(2), [[10.0]]).A_K
    if lam <= spectral_radius(A_K) + 1e-3:
        return
    W = design_shape(sys, A_K, lam)
    Wn = np.linalg.norm(W, 2)
    assert min_eig(lam**2 * W - A_K @ W @ A_K.T) >= -1e-9 * Wn
    assert min_eig((1 - lam) ** 2 * W - sys.Gamma_w) >= -1e-9 * Wn


def test_input_shape_examples():
    assert design_input_shape([[1.0, 0.0]], np.eye(2))[0, 0] == pytest.approx(1.0)
    assert design_input_shape([[1.0, 1.0]], np.diag([1.0, 4.0]))[0, 0] == pytest.approx(5.0)
    with pytest.raises(ValueError, match="input shape undefined"):
        design_input_shape([[0.0, 0.0]], np.eye(2))


def test_input_shape_benchmark(bench):
    W_u = bench.W_u
    assert W_u[0, 0] == pytest.approx((bench.K @ BENCH_WX @ bench.K.T)[0, 0], rel=1e-12)
    M = np.linalg.inv(BENCH_WX) - bench.K.T @ np.linalg.solve(W_u, bench.K)
    assert min_eig(M) >= -1e-12


@settings(max_examples=50, deadline=None)
@given(k=st.tuples(*[st.floats(-3, 3)] * 4), a=st.floats(0.5, 5), b=st.floats(0.5, 5))
def test_input_shape_projection_identity(k, a, b):
    K = np.array(k).reshape(2, 2)
    if abs(np.linalg.det(K)) < 1e-2:
        return
    W = np.diag([a, b])
    W_u = design_input_shape(K, W)
    M = np.linalg.inv(W) - K.T @ np.linalg.solve(W_u, K)
    assert min_eig(M) >= -1e-8 * np.linalg.norm(np.linalg.inv(W))


# verification ------------------------------------------------------------


def test_benchmark_report(bench):
    rep = bench.report
    assert rep.passed
    assert rep["rho_lower_bound"].margin == pytest.approx(
        2.146 - math.sqrt(2 * 0.2497 / 1.7503), abs=1e-3)
    assert rep["rho_le_r_xu"].margin > 0
    assert bench.rho == pytest.approx(2.146, abs=1e-3)
    assert bench.r_x == pytest.approx(12.1010, abs=1e-3)


def test_rho_lower_bound_failure(bench):
    art = replace(bench, lam=0.99, rho=0.01, certificate=None)
    rep = verify_design(art)
    assert not rep["rho_lower_bound"].passed
    assert rep["rho_lower_bound"].margin == pytest.approx(0.01 - math.sqrt(2 * 0.01 / 1.99))


def test_noise_margin_near_zero(bench):
    Gamma = 0.06235 * BENCH_WX
    sys = LinearSystem(bench.sys.A, bench.sys.B, Gamma)
    art = replace(bench, sys=sys, certificate=None)
    rep = verify_design(art)
    assert rep["noise_absorption"].passed
    assert abs(rep["noise_absorption"].margin) < 1e-6


def test_verify_never_raises_on_broken_design(bench):
    art = replace(bench, W_u=np.array([[1e-6]]), r_u=-1.0, certificate=None)
    rep = verify_design(art)
    assert not rep.passed
    assert {c.name for c in rep.failures()} >= {"input_shape", "nonempty_u"}


def test_benchmark_design_with_tight_tolerance(bench):
    # the printed shape is rounded to 4 decimals; at 1e-9 the noise inequality misses
    rep = verify_design(bench, tol=1e-9)
    assert not rep["noise_absorption"].passed
    assert rep["noise_absorption"].margin > -1e-5


# certificate -------------------------------------------------------------


def test_published_certificate_pair_passes():
    chk = check_certificate(BENCH_WX, 12.1010, BENCH_P, np.eye(2), BENCH_GAMMA, 0.0464, 33.7956)
    assert chk.passed
    assert chk.margin_a >= -1e-6 and chk.margin_b > 0


def test_certificate_trace_oracle():
    # tr(P Gamma) by hand from the published P
    tr = 3.2664 * 0.1 + 2 * 3.2016 * 0.05 + 9.3569 * 0.1
    assert float(np.trace(BENCH_P @ BENCH_GAMMA)) == pytest.approx(tr, rel=1e-12)
    beta = certificate_beta(BENCH_P, np.eye(2), BENCH_GAMMA, 0.0464)
    # beta is the smallest b with P / b <= (Q - mu P) / tr
    M = np.eye(2) - 0.0464 * BENCH_P
    assert min_eig(M / tr - BENCH_P / beta) == pytest.approx(0.0, abs=1e-12)


def test_certificate_found(bench):
    cert = bench.certificate
    assert cert is not None and 0 < cert.mu < 1 and cert.beta > 0
    chk = check_certificate(bench.W_x, bench.r_xu, bench.P, bench.Q, bench.sys.Gamma_w,
                            cert.mu, cert.beta)
    assert chk.passed


def test_certificate_none_without_noise(bench):
    sys = LinearSystem(bench.sys.A, bench.sys.B, np.zeros((2, 2)))
    assert certify_convergence(replace(bench, sys=sys, certificate=None)) is None


def test_certificate_grid_excludes_singular_point(bench):
    mu0 = 7 / (MU_GRID_SIZE + 1)
    assert certificate_beta(bench.P, mu0 * bench.P, bench.sys.Gamma_w, mu0) == math.inf
    cert = certify_convergence(bench, Q=mu0 * bench.P)
    assert cert is None or cert.mu != mu0


# lambda selection --------------------------------------------------------


def test_select_lambda_benchmark(bench):
    X, U = boxes()
    lam, W = select_lambda(bench.sys, bench.lqr, X, U, 0.1, 10)
    art = design(bench.sys, X, U, np.eye(2), [[10.0]], eps=0.1, N=10, lam=lam, W_x=W)
    assert art.report.passed
    assert art.r_xu - art.rho * (1 - lam**10) > 0


def test_select_lambda_infeasible_noise(bench):
    X, U = boxes()
    sys = LinearSystem(bench.sys.A, bench.sys.B, 1e4 * BENCH_GAMMA)
    with pytest.raises(DesignInfeasible, match="noise too large"):
        select_lambda(sys, bench.lqr, X, U, 0.1, 10)


def test_select_lambda_without_noise(bench):
    X, U = boxes()
    sys = LinearSystem(bench.sys.A, bench.sys.B, np.zeros((2, 2)))
    lam, W = select_lambda(sys, bench.lqr, X, U, 0.1, 10, grid_size=50)
    art = design(sys, X, U, np.eye(2), [[10.0]], eps=0.1, N=10, lam=lam, W_x=W)
    # tightening vanishes, so the margin is the whole terminal radius
    assert art.rho == 0.0
    assert np.all(art.tightening(np.arange(11)) == 0.0)
    assert art.report.passed


def test_select_lambda_deterministic(bench):
    X, U = boxes()
    a = select_lambda(bench.sys, bench.lqr, X, U, 0.1, 10)
    b = select_lambda(bench.sys, bench.lqr, X, U, 0.1, 10)
    assert a[0] == b[0] and np.array_equal(a[1], b[1])


def test_design_rejects_invalid(bench):
    X, U = boxes(40.0, 0.1)
    with pytest.raises(DesignInfeasible):
        design(bench.sys, X, U, np.eye(2), [[10.0]], eps=0.1, N=10, lam=BENCH_LAMBDA,
               W_x=BENCH_WX, check_tol=1e-5)


# reachable-set properties -----------------------------------------------


def test_prs_empirical_validity(bench):
    rng = np.random.default_rng(11)
    eps, M = bench.eps, 10_000
    L = np.linalg.cholesky(bench.sys.Gamma_w)
    Winv = np.linalg.inv(bench.W_x)
    e = np.zeros((M, 2))
    checks = {1, 2, 5, 10}
    for ell in range(1, 11):
        e = e @ bench.lqr.A_K.T + rng.standard_normal((M, 2)) @ L.T
        if ell in checks:
            q = np.einsum("ij,jk,ik->i", e, Winv, e)
            frac = np.mean(q <= prs_radius(bench.rho, bench.lam, ell) ** 2)
            assert frac >= 1 - eps - 3 * math.sqrt(eps / M)


def test_covariance_recursion(bench):
    rng = np.random.default_rng(12)
    M = 100_000
    L = np.linalg.cholesky(bench.sys.Gamma_w)
    e = np.zeros((M, 2))
    E = np.zeros((2, 2))
    for _ in range(6):
        e = e @ bench.lqr.A_K.T + rng.standard_normal((M, 2)) @ L.T
        E = bench.lqr.A_K @ E @ bench.lqr.A_K.T + bench.sys.Gamma_w
    emp = e.T @ e / M
    assert np.linalg.norm(emp - E) / np.linalg.norm(E) < 0.05


def test_input_prs_implication(bench):
    rng = np.random.default_rng(13)
    for s in (0.5, 1.0, 3.0):
        e = ellipsoid_samples(rng, bench.W_x, s, 10_000)
        u = e @ bench.K.T
        q = np.einsum("ij,jk,ik->i", u, np.linalg.inv(bench.W_u), u)
        assert np.all(q <= s**2 * (1 + 1e-9))


def test_terminal_containment(bench):
    rng = np.random.default_rng(14)
    x = ellipsoid_samples(rng, bench.W_x, bench.r_xu, 10_000)
    assert np.all(x @ bench.X.H.T <= bench.X.h * (1 + 1e-9))
    u = x @ bench.K.T
    assert np.all(u @ bench.U.H.T <= bench.U.h * (1 + 1e-9))


def test_terminal_tightening_ordering(bench):
    assert bench.r_xu - bench.rho * (1 - bench.lam**bench.N) > bench.r_xu - bench.rho


def test_design_is_fast():
    X, U = boxes()
    t0 = time.perf_counter()
    design(double_integrator(), X, U, np.eye(2), [[10.0]], eps=0.1, N=10, lam=BENCH_LAMBDA,
           W_x=BENCH_WX, check_tol=1e-5)
    assert time.perf_counter() - t0 < 5.0
