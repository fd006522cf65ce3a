import numpy as np
import pytest

from mssmpc.baseline import (
    MEASURED,
    SHIFTED,
    DualModeState,
    InitiallyInfeasible,
    IsOptions,
    build_is_ocp,
    is_smpc_step,
    solve_is,
)
from mssmpc.controller import ControllerError, solve_ocp
from mssmpc.model import support_widths


def test_feasible_start_behaves_like_relaxed(bench):
    x = np.array([-30.0, 0.0])
    state = DualModeState()
    u, state = is_smpc_step(bench, x, state)
    assert state.mode == MEASURED
    ms = solve_ocp(bench, x, "A")
    assert np.allclose(u, ms.u0, atol=1e-5)
    assert state.last_solution.J_p == pytest.approx(ms.J_p, rel=1e-6)


def test_initial_infeasibility(bench):
    with pytest.raises(InitiallyInfeasible, match=r"initially infeasible at x0=\[-40.0, 40.0\]"):
        is_smpc_step(bench, [-40.0, 40.0], DualModeState())
    assert isinstance(InitiallyInfeasible("x"), ControllerError)


def test_shifted_mode_fallback(bench):
    state = DualModeState()
    _, state = is_smpc_step(bench, [-40.0, 37.0], state)
    prev = state.last_solution
    x = np.array([-40.0, 40.0])  # infeasible from the measurement
    u, state = is_smpc_step(bench, x, state)
    assert state.mode_history == [MEASURED, SHIFTED]
    sol = state.last_solution
    assert np.allclose(sol.z[0], prev.z[1])
    assert np.allclose(u, sol.v[0] + bench.K @ (x - sol.z[0]))


def test_shifted_mode_needs_history():
    assert DualModeState().mode is None


def test_polytope_tightening_rows(bench):
    x = np.array([-40.0, 37.0])
    sol = solve_is(bench, x)
    wx = support_widths(bench.W_x, bench.X.H)
    wu = support_widths(bench.W_u, bench.U.H)
    for ell in range(1, bench.N):
        t = bench.tightening(ell)
        assert np.all(bench.X.H @ sol.z[ell] <= bench.X.h - t * wx + 1e-6)
        assert np.all(bench.U.H @ sol.v[ell] <= bench.U.h - t * wu + 1e-6)
    HK = np.vstack([bench.X.H, bench.U.H @ bench.K])
    hK = np.concatenate([bench.X.h, bench.U.h])
    assert np.all(HK @ sol.z[-1] <= hK - bench.rho * support_widths(bench.W_x, HK) + 1e-6)
    assert np.all(bench.U.H @ sol.v[0] <= bench.U.h + 1e-6)


def test_first_input_bound_option(bench):
    x = np.array([-40.0, 40.0])
    assert solve_is(bench, x) is None
    assert solve_is(bench, x, IsOptions(first_input_bound=False)) is not None


def test_unknown_tightening():
    with pytest.raises(ValueError):
        IsOptions(tightening="box")


def test_subset_of_relaxed_feasibility(bench):
    """Where the ellipsoidal baseline is feasible, the relaxed controller needs no relaxation."""
    rng = np.random.default_rng(4)
    opts = IsOptions(tightening="ellipsoid", first_input_bound=False)
    hits = 0
    for x in rng.uniform(-45, 45, size=(60, 2)):
        is_sol = solve_is(bench, x, opts)
        if is_sol is None:
            continue
        hits += 1
        ms = solve_ocp(bench, x, "A")
        assert ms.gamma_x == pytest.approx(1.0, abs=1e-7)
        assert ms.gamma_u == pytest.approx(1.0, abs=1e-7)
        # the relaxed terminal set is larger, so it is never more expensive
        assert ms.J_p <= is_sol.J_p * (1 + 1e-5) + 1e-9
        if is_sol.shortcut:
            assert ms.J_p == pytest.approx(is_sol.J_p, rel=1e-5)
    assert hits >= 10


def test_terminal_tightening_ordering(bench):
    assert bench.r_xu - bench.rho < bench.r_xu - bench.rho * (1 - bench.lam**bench.N)


def test_ellipsoid_problem_shape(bench):
    p = build_is_ocp(bench, [1.0, 1.0], IsOptions(tightening="ellipsoid"))
    assert len(p.cones) == 2 * (bench.N - 1) + 1
    assert p.nu == bench.N * bench.m
