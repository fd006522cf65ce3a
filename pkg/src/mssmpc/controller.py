"""Measured-state stochastic MPC: the relaxed conic optimal control problem.

The nominal trajectory always starts at the measured state. State and input
constraint ellipsoids are scaled by ``gamma_x, gamma_u >= 1`` and the scaling
is penalized by ``eta * max(gamma_x - 1, gamma_u - 1)``, so the problem is
feasible for every measurement. Predicted states are eliminated (condensed),
leaving ``y = (v_0, ..., v_{N-1}, gamma_x, gamma_u, t)`` with ``t`` the
epigraph variable of the max.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import socp
from .model import CONTAINS_REL_TOL, as_vector
from .offline import DesignArtifacts
from .special import chi2_cdf

STRATEGIES = ("A", "B", "C")

# interior margin of the starting point handed to the solver
_START_MARGIN = 1e-3


class ControllerError(RuntimeError):
    """The conic solver did not return an optimal solution."""

    def __init__(self, message: str, solution: socp.ConicSolution | None = None):
        super().__init__(message)
        self.solution = solution


@dataclass(frozen=True)
class CondensedDynamics:
    """``z_l = F[l] x + G[l] v`` for ``l = 0..N`` with ``v`` the stacked inputs."""

    F: np.ndarray  # (N+1, n, n)
    G: np.ndarray  # (N+1, n, N*m)

    @classmethod
    def build(cls, A, B, N: int) -> "CondensedDynamics":
        n, m = B.shape
        F = np.empty((N + 1, n, n))
        G = np.zeros((N + 1, n, N * m))
        F[0] = np.eye(n)
        for ell in range(N):
            F[ell + 1] = A @ F[ell]
            G[ell + 1] = A @ G[ell]
            G[ell + 1][:, ell * m:(ell + 1) * m] = B
        return cls(F, G)

    @property
    def N(self) -> int:
        return self.F.shape[0] - 1

    def states(self, x, v) -> np.ndarray:
        return self.F @ x + self.G @ np.ravel(v)


@dataclass(frozen=True)
class OcpTemplate:
    """State-independent parts of the condensed problem for one design."""

    dyn: CondensedDynamics
    H_v: np.ndarray  # J_p = v'H_v v + 2 x'L v + x'M x
    L: np.ndarray
    M: np.ndarray
    Ax: np.ndarray  # W_x^{-1/2} G[l], l = 0..N
    Bx: np.ndarray  # W_x^{-1/2} F[l]
    Wu_is: np.ndarray
    tight: np.ndarray  # rho (1 - lam^l), l = 0..N

    @classmethod
    def build(cls, art: DesignArtifacts) -> "OcpTemplate":
        N, m = art.N, art.m
        dyn = CondensedDynamics.build(art.sys.A, art.sys.B, N)
        weights = [art.Q] * N + [art.lqr.P]
        H_v = np.kron(np.eye(N), art.R)
        L = np.zeros((art.n, N * m))
        M = np.zeros((art.n, art.n))
        for ell in range(N + 1):
            Fl, Gl, Wl = dyn.F[ell], dyn.G[ell], weights[ell]
            H_v += Gl.T @ Wl @ Gl
            L += Fl.T @ Wl @ Gl
            M += Fl.T @ Wl @ Fl
        Wx_is = art.W_x_inv_sqrt
        return cls(
            dyn=dyn,
            H_v=0.5 * (H_v + H_v.T),
            L=L,
            M=0.5 * (M + M.T),
            Ax=np.einsum("ij,ljk->lik", Wx_is, dyn.G),
            Bx=np.einsum("ij,ljk->lik", Wx_is, dyn.F),
            Wu_is=art.W_u_inv_sqrt,
            tight=art.tightening(np.arange(N + 1)),
        )


def _template(art: DesignArtifacts) -> OcpTemplate:
    # cached on the (frozen) artifacts instance
    tpl = art.__dict__.get("_ocp_template")
    if tpl is None:
        tpl = OcpTemplate.build(art)
        art.__dict__["_ocp_template"] = tpl
    return tpl


@dataclass
class OcpSolution:
    """Optimal nominal trajectory and relaxations at one measured state."""

    z: np.ndarray  # (N+1, n)
    v: np.ndarray  # (N, m)
    gamma_x: float
    gamma_u: float
    J_p: float
    eta: float
    status: socp.Status
    strategy: str
    shortcut: bool = False
    conic: socp.ConicSolution | None = field(default=None, repr=False)

    @property
    def t(self) -> float:
        return max(self.gamma_x - 1.0, self.gamma_u - 1.0, 0.0)

    @property
    def J_total(self) -> float:
        return self.J_p + self.eta * self.t

    @property
    def gamma(self) -> float:
        return max(self.gamma_x, self.gamma_u)

    @property
    def u0(self) -> np.ndarray:
        return self.v[0].copy()


def _check_strategy(strategy: str) -> str:
    s = str(strategy).upper()
    if s not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
    return s


def _require_valid(art: DesignArtifacts) -> None:
    if not art.report.passed:
        raise ValueError("design invalid; refusing to build the control problem:\n"
                         + art.report.format())


def build_ocp(art: DesignArtifacts, x, strategy: str = "A") -> socp.ConicProblem:
    """Condensed conic problem at measured state ``x``.

    State cones at ``l = 1..N-1``:  ``|W_x^{-1/2} z_l| <= gamma_x r_x - rho (1 - lam^l)``;
    input cones at ``l = 1..N-1``:  ``|W_u^{-1/2} v_l| <= gamma_u r_u - rho (1 - lam^l)``;
    terminal: ``|W_x^{-1/2} z_N|`` bounded by both ``gamma_x r_x`` and ``gamma_u r_u``
    less ``rho (1 - lam^N)``. Strategy B adds ``H_u v_0 <= h_u``, strategy C
    adds ``H_u v_0 <= gamma_u h_u``.
    """
    strategy = _check_strategy(strategy)
    _require_valid(art)
    tpl = _template(art)
    x = as_vector(x, "x")
    if x.size != art.n:
        raise ValueError(f"state has dimension {x.size}, plant has {art.n}")
    N, m = art.N, art.m
    nv = N * m
    nu = nv + 3
    ix, iu, it = nv, nv + 1, nv + 2

    Qhat = np.zeros((nu, nu))
    Qhat[:nv, :nv] = 2.0 * tpl.H_v
    chat = np.zeros(nu)
    chat[:nv] = 2.0 * (x @ tpl.L)
    chat[it] = art.eta
    const = float(x @ tpl.M @ x)

    cones = []
    ex = np.zeros(nu)
    ex[ix] = art.r_x
    eu = np.zeros(nu)
    eu[iu] = art.r_u
    for ell in range(1, N):
        A = np.zeros((art.n, nu))
        A[:, :nv] = tpl.Ax[ell]
        cones.append(socp.Cone(A, tpl.Bx[ell] @ x, ex, -tpl.tight[ell]))
    for ell in range(1, N):
        A = np.zeros((m, nu))
        A[:, ell * m:(ell + 1) * m] = tpl.Wu_is
        cones.append(socp.Cone(A, np.zeros(m), eu, -tpl.tight[ell]))
    A = np.zeros((art.n, nu))
    A[:, :nv] = tpl.Ax[N]
    bN = tpl.Bx[N] @ x
    cones.append(socp.Cone(A, bN, ex, -tpl.tight[N]))
    cones.append(socp.Cone(A, bN, eu, -tpl.tight[N]))

    rows = [
        (-np.eye(1, nu, ix)[0], -1.0),
        (-np.eye(1, nu, iu)[0], -1.0),
        (np.eye(1, nu, ix)[0] - np.eye(1, nu, it)[0], 1.0),
        (np.eye(1, nu, iu)[0] - np.eye(1, nu, it)[0], 1.0),
        (-np.eye(1, nu, it)[0], 0.0),
    ]
    Hu, hu = art.U.H, art.U.h
    if strategy in ("B", "C"):
        for i in range(Hu.shape[0]):
            row = np.zeros(nu)
            row[:m] = Hu[i]
            if strategy == "B":
                rows.append((row, hu[i]))
            else:
                row[iu] = -hu[i]
                rows.append((row, 0.0))
    G = np.array([r for r, _ in rows])
    g = np.array([b for _, b in rows])
    return socp.ConicProblem(Qhat, chat, tuple(cones), G, g, const)


def lqr_rollout(art: DesignArtifacts, x) -> tuple[np.ndarray, np.ndarray]:
    """Nominal states and inputs under ``v = K z`` from ``z_0 = x``."""
    x = as_vector(x, "x")
    z = np.empty((art.N + 1, art.n))
    v = np.empty((art.N, art.m))
    z[0] = x
    for ell in range(art.N):
        v[ell] = art.lqr.K @ z[ell]
        z[ell + 1] = art.lqr.A_K @ z[ell]
    return z, v


def required_gammas(art: DesignArtifacts, z, v, strategy: str = "A") -> tuple[float, float]:
    """Smallest ``(gamma_x, gamma_u) >= 1`` making ``(z, v)`` feasible.

    Evaluates every cone at its binding ``gamma``; for strategy C the first
    input also enters ``gamma_u``. Strategy B's hard bound does not involve
    ``gamma`` and is not checked here.
    """
    N = art.N
    tight = art.tightening(np.arange(N + 1))
    Wx_is, Wu_is = art.W_x_inv_sqrt, art.W_u_inv_sqrt
    zn = np.linalg.norm(np.asarray(z) @ Wx_is.T, axis=1)
    vn = np.linalg.norm(np.asarray(v) @ Wu_is.T, axis=1)
    gx = max(1.0, float(np.max((zn[1:] + tight[1:]) / art.r_x)))
    gu = 1.0
    if N > 1:
        gu = max(gu, float(np.max((vn[1:N] + tight[1:N]) / art.r_u)))
    gu = max(gu, (zn[N] + tight[N]) / art.r_u)
    if strategy == "C":
        gu = max(gu, float(np.max(art.U.H @ np.asarray(v)[0] / art.U.h)))
    return gx, gu


def lqr_shortcut_applicable(art: DesignArtifacts, x) -> bool:
    """True iff ``x' W_x^{-1} x <= r_xu^2``, where the LQR law solves the problem."""
    x = as_vector(x, "x")
    q = float(x @ np.linalg.solve(art.W_x, x))
    return q <= art.r_xu**2 * (1.0 + 1e-9)


def _unconstrained_solution(art, x, strategy) -> OcpSolution | None:
    # The LQR rollout minimizes J_p without constraints; if it is feasible
    # with gamma = 1 it is optimal for the relaxed problem as well.
    z, v = lqr_rollout(art, x)
    gx, gu = required_gammas(art, z, v, strategy)
    if gx > 1.0 or gu > 1.0:
        return None
    if strategy == "B" and np.any(art.U.H @ v[0] > art.U.h):
        return None
    J = float(np.einsum("li,ij,lj->", z[:-1], art.Q, z[:-1])
              + np.einsum("li,ij,lj->", v, art.R, v) + z[-1] @ art.lqr.P @ z[-1])
    return OcpSolution(z=z, v=v, gamma_x=1.0, gamma_u=1.0, J_p=J, eta=art.eta,
                       status=socp.Status.OPTIMAL, strategy=strategy, shortcut=True)


def _interior_start(art: DesignArtifacts, x, strategy: str) -> np.ndarray:
    """Strictly feasible ``y`` built from the LQR rollout, so Phase-I is skipped."""
    tpl = _template(art)
    z, v = lqr_rollout(art, x)
    if strategy == "B":
        # pull the first input strictly inside U
        ratio = float(np.max(art.U.H @ v[0] / art.U.h))
        if ratio >= 1.0 - _START_MARGIN:
            v[0] *= (1.0 - _START_MARGIN) / ratio
            z = tpl.dyn.states(x, v)
    gx, gu = required_gammas(art, z, v, strategy)
    gx = gx * (1.0 + _START_MARGIN) + _START_MARGIN
    gu = gu * (1.0 + _START_MARGIN) + _START_MARGIN
    t = max(gx, gu) - 1.0 + _START_MARGIN
    return np.concatenate([v.ravel(), [gx, gu, t]])


def solve_ocp(art: DesignArtifacts, x, strategy: str = "A", *, shortcut: bool = False,
              settings: socp.SolverSettings | None = None, backend: str | None = None
              ) -> OcpSolution:
    """Solve the relaxed problem at ``x``.

    With ``shortcut=True`` the unconstrained LQR rollout is returned directly
    whenever it already satisfies all constraints at ``gamma = 1``; this is
    exact, not an approximation.
    """
    strategy = _check_strategy(strategy)
    x = as_vector(x, "x")
    if shortcut:
        _require_valid(art)
        sol = _unconstrained_solution(art, x, strategy)
        if sol is not None:
            return sol
    problem = build_ocp(art, x, strategy)
    y0 = _interior_start(art, x, strategy)
    res = socp.solve(problem, y0=y0, settings=settings, backend=backend)
    if not res.optimal:
        raise ControllerError(
            f"conic solver returned {res.status.value} at x={x.tolist()} "
            f"(strategy {strategy}, {res.newton_steps} Newton steps)", res)
    N, m = art.N, art.m
    v = res.y[:N * m].reshape(N, m)
    z = _template(art).dyn.states(x, v).reshape(N + 1, art.n)
    gx = max(float(res.y[N * m]), 1.0)
    gu = max(float(res.y[N * m + 1]), 1.0)
    J_p = float(np.einsum("li,ij,lj->", z[:-1], art.Q, z[:-1])
                + np.einsum("li,ij,lj->", v, art.R, v) + z[-1] @ art.lqr.P @ z[-1])
    return OcpSolution(z=z, v=v, gamma_x=gx, gamma_u=gu, J_p=J_p, eta=art.eta,
                       status=res.status, strategy=strategy, conic=res)


def control_step(art: DesignArtifacts, x, strategy: str = "A", *, shortcut: bool = False,
                 **kwargs) -> tuple[np.ndarray, OcpSolution]:
    """Input ``u_k = v*_0`` to apply at measured state ``x`` and the full solution."""
    sol = solve_ocp(art, x, strategy, shortcut=shortcut, **kwargs)
    return sol.u0, sol


def candidate_shift(sol: OcpSolution, w, art: DesignArtifacts) -> tuple[np.ndarray, np.ndarray]:
    """Shifted trajectory for the next step after disturbance ``w``.

    ``z+_l = z*_{l+1} + A_K^l w`` for ``l < N`` and ``z+_N = A_K z*_N + A_K^N w``;
    ``v+_l = v*_{l+1} + K A_K^l w`` for ``l < N-1`` and
    ``v+_{N-1} = K z*_N + K A_K^{N-1} w``.
    """
    w = as_vector(w, "w")
    N = art.N
    A_K, K = art.lqr.A_K, art.lqr.K
    pw = np.empty((N + 1, art.n))
    pw[0] = w
    for ell in range(N):
        pw[ell + 1] = A_K @ pw[ell]
    z = np.empty_like(sol.z)
    v = np.empty_like(sol.v)
    z[:N] = sol.z[1:] + pw[:N]
    z[N] = A_K @ sol.z[N] + pw[N]
    v[:N - 1] = sol.v[1:] + pw[:N - 1] @ K.T
    v[N - 1] = K @ sol.z[N] + K @ pw[N - 1]
    return z, v


def candidate_gammas(z, v, art: DesignArtifacts, strategy: str = "A") -> tuple[float, float]:
    """Smallest relaxations admitting the shifted candidate ``(z, v)``.

    Input rows use ``W_u`` and the terminal row uses ``W_x`` with ``r_u``,
    matching the constraints of the control problem.
    """
    return required_gammas(art, z, v, _check_strategy(strategy))


@dataclass(frozen=True)
class PosteriorBounds:
    """Per-step radii (NaN where undefined) and the implied probabilities.

    Row ``l - 1`` holds step ``l = 1..N``; row ``N - 1`` uses the terminal
    radius ``rho_xu`` for both components.
    """

    rho_x: np.ndarray
    rho_u: np.ndarray
    p_x: np.ndarray
    p_u: np.ndarray


def radius_probability(rho: float, n: int, family: str = "gaussian") -> float:
    """Lower bound on ``Pr{e in E_W(rho)}``; 0 for an undefined radius."""
    if not np.isfinite(rho) or rho <= 0.0:
        return 0.0
    if family == "gaussian":
        return chi2_cdf(rho * rho, n)
    return max(0.0, 1.0 - n / (rho * rho))


def aposteriori_bounds(sol: OcpSolution, art: DesignArtifacts) -> PosteriorBounds:
    """Tightest probability radii implied by the optimal nominal trajectory."""
    N = art.N
    lam = art.lam
    zn = np.linalg.norm(sol.z @ art.W_x_inv_sqrt.T, axis=1)
    vn = np.linalg.norm(sol.v @ art.W_u_inv_sqrt.T, axis=1)
    rho_x = np.full(N, np.nan)
    rho_u = np.full(N, np.nan)
    # within the membership tolerance of the boundary counts as on it
    inside = 1.0 - CONTAINS_REL_TOL
    for ell in range(1, N):
        den = 1.0 - lam**ell
        if zn[ell] < art.r_x * inside:
            rho_x[ell - 1] = (art.r_x - zn[ell]) / den
        if vn[ell] < art.r_u * inside:
            rho_u[ell - 1] = (art.r_u - vn[ell]) / den
    if zn[N] < art.r_xu * inside:
        rho_x[N - 1] = rho_u[N - 1] = (art.r_xu - zn[N]) / (1.0 - lam**N)
    p = np.vectorize(lambda r: radius_probability(r, art.n, art.family), otypes=[float])
    return PosteriorBounds(rho_x, rho_u, p(rho_x), p(rho_u))


def stage_cost(art: DesignArtifacts, x, u) -> float:
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    return float(x @ art.Q @ x + u @ art.R @ u)


__all__ = [
    "STRATEGIES",
    "CondensedDynamics",
    "ControllerError",
    "OcpSolution",
    "OcpTemplate",
    "PosteriorBounds",
    "aposteriori_bounds",
    "build_ocp",
    "candidate_gammas",
    "candidate_shift",
    "control_step",
    "lqr_rollout",
    "lqr_shortcut_applicable",
    "radius_probability",
    "required_gammas",
    "solve_ocp",
    "stage_cost",
]
