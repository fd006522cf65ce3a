import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mssmpc import socp
from mssmpc.controller import (
    CondensedDynamics,
    ControllerError,
    aposteriori_bounds,
    build_ocp,
    candidate_gammas,
    candidate_shift,
    control_step,
    lqr_rollout,
    lqr_shortcut_applicable,
    solve_ocp,
)
from mssmpc.model import LinearSystem, Polytope
from mssmpc.offline import design
from mssmpc.socp._backend import ext_kernels

from conftest import ellipsoid_samples


def check_solution(art, x, sol, tol=1e-7):
    A, B = art.sys.A, art.sys.B
    z, v = sol.z, sol.v
    assert np.array_equal(z[0], x)
    for ell in range(art.N):
        assert np.allclose(z[ell + 1], A @ z[ell] + B @ v[ell], atol=1e-9 * (1 + np.abs(z).max()))
    assert sol.gamma_x >= 1.0 and sol.gamma_u >= 1.0
    y = np.concatenate([v.ravel(), [sol.gamma_x, sol.gamma_u, sol.t]])
    assert build_ocp(art, x, sol.strategy).violation(y) <= tol * (1 + np.abs(y).max())


def test_condensed_dynamics(bench):
    dyn = CondensedDynamics.build(bench.sys.A, bench.sys.B, bench.N)
    assert np.array_equal(dyn.F[0], np.eye(2)) and not np.any(dyn.G[0])
    for ell in range(bench.N):
        assert np.allclose(dyn.F[ell + 1], bench.sys.A @ dyn.F[ell])
        nxt = bench.sys.A @ dyn.G[ell]
        nxt[:, ell:ell + 1] += bench.sys.B
        assert np.allclose(dyn.G[ell + 1], nxt)
    rng = np.random.default_rng(0)
    x, v = rng.standard_normal(2), rng.standard_normal((bench.N, 1))
    z = dyn.states(x, v).reshape(bench.N + 1, 2)
    zz = x.copy()
    for ell in range(bench.N):
        zz = bench.sys.A @ zz + bench.sys.B @ v[ell]
        assert np.allclose(z[ell + 1], zz)


@pytest.mark.parametrize("strategy", "ABC")
def test_origin(bench, strategy):
    sol = solve_ocp(bench, [0.0, 0.0], strategy)
    assert sol.optimal if hasattr(sol, "optimal") else sol.status == socp.Status.OPTIMAL
    assert np.allclose(sol.v, 0.0, atol=1e-7)
    assert sol.gamma_x == pytest.approx(1.0, abs=1e-7) and sol.t == pytest.approx(0, abs=1e-7)
    assert sol.J_p == pytest.approx(0.0, abs=1e-9)
    u, _ = control_step(bench, [0.0, 0.0], strategy)
    assert np.allclose(u, 0.0, atol=1e-7)


def test_lqr_region_equivalence(bench):
    rng = np.random.default_rng(1)
    for x in ellipsoid_samples(rng, bench.W_x, bench.r_xu, 100):
        sol = solve_ocp(bench, x, "A")
        assert sol.J_p == pytest.approx(x @ bench.P @ x, rel=1e-5, abs=1e-9)
        assert np.allclose(sol.u0, bench.K @ x, atol=1e-5)
        assert sol.gamma_x == pytest.approx(1.0, abs=1e-7)
        assert sol.gamma_u == pytest.approx(1.0, abs=1e-7)


def test_shortcut_is_exact(bench):
    rng = np.random.default_rng(2)
    for x in ellipsoid_samples(rng, bench.W_x, bench.r_xu, 20):
        fast = solve_ocp(bench, x, "A", shortcut=True)
        slow = solve_ocp(bench, x, "A")
        assert fast.shortcut and not slow.shortcut
        assert fast.J_total == pytest.approx(slow.J_total, rel=1e-6, abs=1e-8)
        assert np.allclose(fast.v, slow.v, atol=1e-5)


def test_shortcut_applicability(bench):
    d = np.array([1.0, -0.3])
    d = d / math.sqrt(d @ np.linalg.solve(bench.W_x, d))
    assert lqr_shortcut_applicable(bench, [0.0, 0.0])
    assert lqr_shortcut_applicable(bench, bench.r_xu * d)
    assert not lqr_shortcut_applicable(bench, 1.01 * bench.r_xu * d)


@pytest.mark.parametrize("strategy", ["A", "C"])
def test_always_feasible(bench, strategy):
    rng = np.random.default_rng(3)
    for _ in range(100):
        g = rng.standard_normal(2)
        x = g / np.linalg.norm(g) * rng.uniform(0, 10 * bench.r_x)
        sol = solve_ocp(bench, x, strategy)
        assert sol.status == socp.Status.OPTIMAL
        assert sol.conic.kkt.max() <= 1e-6
        check_solution(bench, x, sol)


def test_relaxation_at_frontier(bench):
    x = np.array([-40.0, 40.0])
    for s in "ABC":
        sol = solve_ocp(bench, x, s)
        check_solution(bench, x, sol)
    a, b, c = (solve_ocp(bench, x, s) for s in "ABC")
    assert c.gamma > 1.0 + 1e-3 and b.gamma > c.gamma
    # more constraints can only raise the optimum
    assert a.J_total <= c.J_total + 1e-6 <= b.J_total + 2e-6
    assert np.all(bench.U.H @ b.v[0] <= bench.U.h + 1e-7)
    assert np.all(bench.U.H @ c.v[0] <= c.gamma_u * bench.U.h + 1e-7)


@settings(max_examples=25, deadline=None)
@given(x1=st.floats(-60, 60), x2=st.floats(-60, 60))
def test_strategy_ordering(bench, x1, x2):
    x = np.array([x1, x2])
    J = {s: solve_ocp(bench, x, s).J_total for s in "ABC"}
    tol = 1e-6 * (1 + J["B"])
    assert J["A"] <= J["C"] + tol and J["C"] <= J["B"] + tol


def test_penalty_monotone(bench):
    x = np.array([-40.0, 40.0])
    ts = [solve_ocp(replace(bench, eta=eta), x, "C").t for eta in (1e1, 1e2, 1e3, 1e4, 1e5)]
    assert all(a >= b - 1e-7 for a, b in zip(ts, ts[1:]))


def test_invalid_design_refused(bench):
    broken = replace(bench, r_u=0.1, certificate=None)
    with pytest.raises(ValueError, match="design invalid"):
        build_ocp(broken, [1.0, 0.0])


def test_unknown_strategy(bench):
    with pytest.raises(ValueError):
        solve_ocp(bench, [1.0, 0.0], "D")


def test_solver_failure_surfaces(bench):
    with pytest.raises(ControllerError) as info:
        solve_ocp(bench, [-40.0, 40.0], "C", settings=socp.SolverSettings(max_newton=2))
    assert info.value.solution is not None


@pytest.mark.skipif(ext_kernels is None, reason="compiled kernels not built")
def test_backends_agree_on_control_problem(bench):
    for x in ([-40.0, 40.0], [-40.0, 37.0], [25.0, -10.0]):
        a = solve_ocp(bench, x, "C", backend="python")
        b = solve_ocp(bench, x, "C", backend="cython")
        assert np.allclose(a.v, b.v, atol=1e-6)
        assert a.J_total == pytest.approx(b.J_total, rel=1e-9)


def _toy(eta=10.0):
    sys = LinearSystem([[1.2]], [[1.0]], [[0.01]])
    X = Polytope.box([10.0])
    U = Polytope.box([5.0])
    return design(sys, X, U, [[1.0]], [[1.0]], eps=0.1, N=1, eta=eta, family="gaussian",
                  lam=0.9, check_tol=1e-9)


@pytest.mark.parametrize("x0", [0.5, 8.0, -20.0, 40.0])
def test_single_step_toy_against_grid(x0):
    art = _toy()
    sol = solve_ocp(art, [x0], "A")
    # for fixed v0 the cheapest relaxations are the smallest feasible ones,
    # so an exhaustive grid on v0 with the exact inner minimum covers the 3-D problem
    a, b = art.sys.A[0, 0], art.sys.B[0, 0]
    P = art.P[0, 0]
    tight = art.tightening(1)
    wx = math.sqrt(art.W_x[0, 0])
    v0 = np.linspace(-100, 100, 2_000_001)
    z1 = a * x0 + b * v0
    zn = np.abs(z1) / wx
    gx = np.maximum(1.0, (zn + tight) / art.r_x)
    gu = np.maximum(1.0, (zn + tight) / art.r_u)
    J = x0 * x0 + v0 * v0 + P * z1 * z1 + art.eta * np.maximum(gx - 1.0, gu - 1.0)
    assert sol.J_total == pytest.approx(J.min(), abs=1e-3)
    assert sol.u0[0] == pytest.approx(v0[np.argmin(J)], abs=1e-3)


def test_candidate_shift_without_noise(bench):
    sol = solve_ocp(bench, [-40.0, 40.0], "C")
    z, v = candidate_shift(sol, np.zeros(2), bench)
    assert np.allclose(z[:-1], sol.z[1:])
    assert np.allclose(v[:-1], sol.v[1:])
    assert np.allclose(v[-1], bench.K @ sol.z[-1])
    assert np.allclose(z[-1], bench.lqr.A_K @ sol.z[-1])


@settings(max_examples=30, deadline=None)
@given(w1=st.floats(-5, 5), w2=st.floats(-5, 5))
def test_candidate_shift_obeys_dynamics(bench, w1, w2):
    sol = solve_ocp(bench, [-40.0, 37.0], "A", shortcut=True)
    w = np.array([w1, w2])
    z, v = candidate_shift(sol, w, bench)
    assert np.allclose(z[0], sol.z[1] + w)
    for ell in range(bench.N):
        assert np.allclose(z[ell + 1], bench.sys.A @ z[ell] + bench.sys.B @ v[ell], atol=1e-9)


def test_candidate_shift_scalar_by_hand():
    art = _toy()
    sol = solve_ocp(art, [3.0], "A")
    w = 0.2
    z, v = candidate_shift(sol, [w], art)
    a_k, k = art.lqr.A_K[0, 0], art.K[0, 0]
    assert z[0, 0] == pytest.approx(sol.z[1, 0] + w)
    assert v[0, 0] == pytest.approx(k * sol.z[1, 0] + k * w)
    assert z[1, 0] == pytest.approx(a_k * sol.z[1, 0] + a_k * w)


def test_candidate_gammas(bench):
    N = bench.N
    z = np.zeros((N + 1, 2))
    v = np.zeros((N, 1))
    assert candidate_gammas(z, v, bench) == (1.0, 1.0)
    ell = 3
    d = np.array([1.0, 0.0])
    z[ell] = bench.r_x * d / math.sqrt(d @ np.linalg.solve(bench.W_x, d))
    gx, gu = candidate_gammas(z, v, bench)
    assert gx == pytest.approx(1.0 + bench.rho * (1 - bench.lam**ell) / bench.r_x)
    assert gu == 1.0


def test_aposteriori_bounds_definitions(bench):
    sol = solve_ocp(bench, [0.0, 0.0], "A", shortcut=True)
    b = aposteriori_bounds(sol, bench)
    for ell in range(1, bench.N):
        assert b.rho_x[ell - 1] == pytest.approx(bench.r_x / (1 - bench.lam**ell))
    # a nominal state on the boundary leaves no positive radius
    d = np.array([0.3, 1.0])
    sol.z[2] = bench.r_x * d / math.sqrt(d @ np.linalg.solve(bench.W_x, d))
    b = aposteriori_bounds(sol, bench)
    assert math.isnan(b.rho_x[1]) and b.p_x[1] == 0.0


def test_aposteriori_bounds_frontier(bench):
    sol = solve_ocp(bench, [-40.0, 40.0], "A")
    b = aposteriori_bounds(sol, bench)
    assert round(b.p_x[0], 3) == 1.0 and b.p_u[0] < 1.0
    assert np.all(np.round(b.p_x[5:], 3) == 1.0) and np.all(np.round(b.p_u[5:], 3) == 1.0)


def _sample_noise(art, rng, size):
    return rng.standard_normal((size, art.n)) @ np.linalg.cholesky(art.sys.Gamma_w).T


@pytest.mark.parametrize("strategy", ["A", "C"])
def test_expected_relaxation_nonincreasing(bench, strategy):
    x = np.array([-40.0, 40.0])
    sol = solve_ocp(bench, x, strategy)
    rng = np.random.default_rng(8)
    g = np.array([candidate_gammas(*candidate_shift(sol, w, bench), bench, strategy)
                  for w in _sample_noise(bench, rng, 2000)])
    se = g.std(axis=0, ddof=1) / math.sqrt(len(g))
    assert g[:, 0].mean() <= sol.gamma_x + 3 * se[0] + 1e-12
    assert g[:, 1].mean() <= sol.gamma_u + 3 * se[1] + 1e-12


@pytest.mark.parametrize("strategy", ["A", "C"])
def test_stochastic_descent(bench, strategy):
    x = np.array([-40.0, 40.0])
    sol = solve_ocp(bench, x, strategy)
    u = sol.u0
    rng = np.random.default_rng(9)
    xs = (bench.sys.A @ x + bench.sys.B @ u) + _sample_noise(bench, rng, 2000)
    dJ = np.array([solve_ocp(bench, xp, strategy, shortcut=True).J_total for xp in xs]) \
        - sol.J_total
    stage = x @ bench.Q @ x + u @ bench.R @ u
    bound = float(np.trace(bench.P @ bench.sys.Gamma_w)) - stage
    assert dJ.mean() <= bound + 3 * dJ.std(ddof=1) / math.sqrt(len(dJ))


def test_rollout_is_lqr(bench):
    z, v = lqr_rollout(bench, [3.0, -1.0])
    assert np.allclose(v[0], bench.K @ z[0]) and np.allclose(z[1], bench.lqr.A_K @ z[0])
