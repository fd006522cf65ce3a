"""Initial-state SMPC baseline with dual-mode initialization.

Constraints are tightened once and for all (no relaxation). The nominal
trajectory starts at the measurement when that problem is feasible and at
the previously predicted state otherwise; the applied input then carries the
error feedback ``K (x - z_0)``.

Two tightenings are offered. ``"polytope"`` subtracts the reachable-set
ellipsoids from the polytopes row by row,
``h_i - rho (1 - lam^l) sqrt(H_i W H_i')``, with the terminal set
``{H_x z <= h_x, H_u K z <= h_u}`` shrunk by ``E_{W_x}(rho)``.
``"ellipsoid"`` uses the same ellipsoidal cones as the relaxed controller
with ``gamma = 1`` and terminal radius ``r_xu - rho``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import socp
from .controller import (
    ControllerError,
    OcpSolution,
    _require_valid,
    _template,
    lqr_rollout,
)
from .model import as_vector, support_widths
from .offline import DesignArtifacts

TIGHTENINGS = ("polytope", "ellipsoid")
MEASURED = "measured"
SHIFTED = "shifted"


class InitiallyInfeasible(ControllerError):
    """The baseline problem has no solution at the first measurement."""


@dataclass(frozen=True)
class IsOptions:
    """Baseline variant.

    ``first_input_bound`` adds ``v_0 in U``; without it the first input is
    unconstrained, as in the relaxed controller's strategy A.
    """

    tightening: str = "polytope"
    first_input_bound: bool = True

    def __post_init__(self):
        if self.tightening not in TIGHTENINGS:
            raise ValueError(f"unknown tightening {self.tightening!r}; expected {TIGHTENINGS}")


@dataclass
class DualModeState:
    """Per-episode memory of the baseline controller."""

    last_solution: OcpSolution | None = None
    mode_history: list = field(default_factory=list)

    @property
    def mode(self) -> str | None:
        return self.mode_history[-1] if self.mode_history else None


def _linear_rows(art: DesignArtifacts, z0, opts: IsOptions):
    """``G v <= g`` for the polytopic tightening at nominal start ``z0``."""
    tpl = _template(art)
    N, m = art.N, art.m
    Hx, hx = art.X.H, art.X.h
    Hu, hu = art.U.H, art.U.h
    wx = support_widths(art.W_x, Hx)
    wu = support_widths(art.W_u, Hu)
    G_rows, g_rows = [], []
    for ell in range(1, N):
        G_rows.append(Hx @ tpl.dyn.G[ell])
        g_rows.append(hx - tpl.tight[ell] * wx - Hx @ tpl.dyn.F[ell] @ z0)
        sel = np.zeros((Hu.shape[0], N * m))
        sel[:, ell * m:(ell + 1) * m] = Hu
        G_rows.append(sel)
        g_rows.append(hu - tpl.tight[ell] * wu)
    HK = np.vstack([Hx, Hu @ art.lqr.K])
    hK = np.concatenate([hx, hu])
    G_rows.append(HK @ tpl.dyn.G[N])
    g_rows.append(hK - art.rho * support_widths(art.W_x, HK) - HK @ tpl.dyn.F[N] @ z0)
    if opts.first_input_bound:
        sel = np.zeros((Hu.shape[0], N * m))
        sel[:, :m] = Hu
        G_rows.append(sel)
        g_rows.append(hu)
    return np.vstack(G_rows), np.concatenate(g_rows)


def build_is_ocp(art: DesignArtifacts, z0, opts: IsOptions = IsOptions()) -> socp.ConicProblem:
    """Baseline problem over ``v`` with the nominal trajectory starting at ``z0``."""
    _require_valid(art)
    tpl = _template(art)
    z0 = as_vector(z0, "z0")
    N, m = art.N, art.m
    nv = N * m
    Qhat = 2.0 * tpl.H_v
    chat = 2.0 * (z0 @ tpl.L)
    const = float(z0 @ tpl.M @ z0)
    if opts.tightening == "polytope":
        G, g = _linear_rows(art, z0, opts)
        return socp.ConicProblem(Qhat, chat, (), G, g, const)

    cones = []
    zero = np.zeros(nv)
    for ell in range(1, N):
        cones.append(socp.Cone(tpl.Ax[ell], tpl.Bx[ell] @ z0, zero, art.r_x - tpl.tight[ell]))
        A = np.zeros((m, nv))
        A[:, ell * m:(ell + 1) * m] = tpl.Wu_is
        cones.append(socp.Cone(A, np.zeros(m), zero, art.r_u - tpl.tight[ell]))
    cones.append(socp.Cone(tpl.Ax[N], tpl.Bx[N] @ z0, zero, art.r_xu - art.rho))
    G = g = None
    if opts.first_input_bound:
        G = np.zeros((art.U.H.shape[0], nv))
        G[:, :m] = art.U.H
        g = art.U.h
    return socp.ConicProblem(Qhat, chat, tuple(cones), G, g, const)


def _as_solution(art: DesignArtifacts, z0, v, status, conic=None, shortcut=False):
    z = _template(art).dyn.states(z0, v).reshape(art.N + 1, art.n)
    J = float(np.einsum("li,ij,lj->", z[:-1], art.Q, z[:-1])
              + np.einsum("li,ij,lj->", v, art.R, v) + z[-1] @ art.lqr.P @ z[-1])
    return OcpSolution(z=z, v=v, gamma_x=1.0, gamma_u=1.0, J_p=J, eta=art.eta, status=status,
                       strategy="IS", shortcut=shortcut, conic=conic)


def solve_is(art: DesignArtifacts, z0, opts: IsOptions = IsOptions(), *, shortcut: bool = False,
             settings: socp.SolverSettings | None = None) -> OcpSolution | None:
    """Baseline optimum from ``z0``, or None if the problem is infeasible.

    With ``shortcut=True`` the LQR rollout is returned when it is feasible
    (then it is optimal).
    """
    z0 = as_vector(z0, "z0")
    problem = build_is_ocp(art, z0, opts)
    _, v_lqr = lqr_rollout(art, z0)
    if shortcut and problem.violation(v_lqr.ravel()) <= 0.0:
        return _as_solution(art, z0, v_lqr, socp.Status.OPTIMAL, shortcut=True)
    res = socp.solve(problem, y0=v_lqr.ravel(), settings=settings)
    if res.status == socp.Status.INFEASIBLE:
        return None
    if not res.optimal:
        raise ControllerError(f"baseline solver returned {res.status.value} at z0={z0.tolist()}",
                              res)
    return _as_solution(art, z0, res.y.reshape(art.N, art.m), res.status, conic=res)


def is_smpc_step(art: DesignArtifacts, x, state: DualModeState,
                 opts: IsOptions = IsOptions(), *, shortcut: bool = False):
    """One dual-mode baseline step; returns ``(u, state)``.

    Raises :class:`InitiallyInfeasible` when the first call is infeasible at
    the measurement.
    """
    x = as_vector(x, "x")
    sol = solve_is(art, x, opts, shortcut=shortcut)
    mode = MEASURED
    if sol is None:
        if state.last_solution is None:
            raise InitiallyInfeasible(f"IS-SMPC initially infeasible at x0={x.tolist()}")
        z0 = state.last_solution.z[1]
        sol = solve_is(art, z0, opts, shortcut=shortcut)
        mode = SHIFTED
        if sol is None:
            raise ControllerError(
                f"baseline infeasible from both the measurement {x.tolist()} and the "
                f"predicted state {z0.tolist()}")
    u = sol.v[0] + art.lqr.K @ (x - sol.z[0])
    state.last_solution = sol
    state.mode_history.append(mode)
    return u, state
