"""Log-barrier interior-point method for small second-order cone programs.

Damped Newton centering (Armijo backtracking) along the central path
``t <- 10 t``; a Phase-I problem with a shared slack finds a strictly
feasible start when none is supplied. Data are normalized before solving:
each constraint row block and the objective are divided by their norm, which
leaves the argmin unchanged.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from . import _backend
from .problem import ConicProblem, ConicSolution, Duals, KktResiduals, SolverSettings, Status

log = logging.getLogger(__name__)

_TINY = 1e-300
# relative step size below which Newton iterates only shuffle rounding error
_FLOOR = 1e-14
# a cone whose slack and argument are both below this (times 1 + |y|) sits at its apex
_APEX_TOL = 1e-7


@dataclass
class _Packed:
    Q: np.ndarray
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    cc: np.ndarray
    d: np.ndarray
    G: np.ndarray
    g: np.ndarray
    obj_scale: float
    cone_scale: np.ndarray
    lin_scale: np.ndarray
    rows: tuple

    def args(self):
        return (self.Q, self.c, self.A, self.b, self.cc, self.d, self.G, self.g)

    @property
    def theta(self) -> int:
        return 2 * self.A.shape[0] + self.G.shape[0]


def _objective_scale(Q: np.ndarray, c: np.ndarray) -> float:
    qn = float(np.linalg.norm(Q))
    if qn > 0:
        return qn
    cn = float(np.linalg.norm(c))
    return cn if cn > 0 else 1.0


def pack(problem: ConicProblem) -> _Packed:
    """Normalized, zero-padded arrays for the kernels."""
    nu = problem.nu
    K = len(problem.cones)
    p = max((cone.A.shape[0] for cone in problem.cones), default=1)
    A = np.zeros((K, p, nu))
    b = np.zeros((K, p))
    cc = np.zeros((K, nu))
    d = np.zeros(K)
    cone_scale = np.ones(K)
    rows = []
    for k, cone in enumerate(problem.cones):
        r = cone.A.shape[0]
        rows.append(r)
        scale = max(np.linalg.norm(cone.A), np.linalg.norm(cone.b), np.linalg.norm(cone.c),
                    abs(cone.d), _TINY)
        cone_scale[k] = scale
        A[k, :r] = cone.A / scale
        b[k, :r] = cone.b / scale
        cc[k] = cone.c / scale
        d[k] = cone.d / scale
    G = problem.G
    g = problem.g
    lin_scale = np.maximum(np.maximum(np.linalg.norm(G, axis=1), np.abs(g)), _TINY) if G.shape[0] \
        else np.ones(0)
    obj_scale = _objective_scale(problem.Qhat, problem.chat)
    return _Packed(
        Q=np.ascontiguousarray(problem.Qhat / obj_scale),
        c=np.ascontiguousarray(problem.chat / obj_scale),
        A=A, b=b, cc=cc, d=d,
        G=np.ascontiguousarray(G / lin_scale[:, None]) if G.shape[0] else np.zeros((0, nu)),
        g=np.ascontiguousarray(g / lin_scale) if G.shape[0] else np.zeros(0),
        obj_scale=obj_scale, cone_scale=cone_scale, lin_scale=lin_scale, rows=tuple(rows),
    )


def _center(kern, y, t, data, st: SolverSettings, stop=None):
    """Damped Newton minimization of ``t f + phi`` from the interior point ``y``.

    Returns ``(y, steps, reason)`` with reason one of ``converged``, ``stalled``
    (no further progress is representable), ``stopped`` (``stop(y)`` fired) or
    ``limit``.
    """
    for it in range(st.max_newton):
        dy, dec2, ok = kern.newton_step(y, t, *data)
        if not ok:
            return y, it, "stalled"
        if 0.5 * dec2 <= st.newton_tol:
            return y, it, "converged"
        step = 1.0
        while True:
            dm = kern.merit_delta(y, dy, step, t, *data)
            # merit_delta measures slack changes relatively; the direct check
            # rejects steps whose recomputed slack rounds to zero
            if dm <= -st.armijo_slope * step * dec2 and kern.is_interior(y + step * dy,
                                                                          *data[2:]):
                break
            step *= st.armijo_shrink
            if step < 1e-14:
                return y, it, "stalled"
        y_new = y + step * dy
        if np.max(np.abs(y_new - y)) <= _FLOOR * (1.0 + np.max(np.abs(y))):
            # rounding floor: further steps no longer move y
            return y_new, it + 1, "stalled"
        y = y_new
        if stop is not None and stop(y):
            return y, it + 1, "stopped"
    return y, st.max_newton, "limit"


def _max_violation(y, data: _Packed) -> float:
    worst = -np.inf
    if data.A.shape[0]:
        u = data.A @ y + data.b
        worst = max(worst, float(np.max(np.linalg.norm(u, axis=1) - (data.cc @ y + data.d))))
    if data.G.shape[0]:
        worst = max(worst, float(np.max(data.G @ y - data.g)))
    return worst


def _phase1(kern, y0, data: _Packed, st: SolverSettings):
    """Strictly feasible point via ``min s`` with every constraint relaxed by ``s``.

    Returns ``(y, steps, status)``; ``y`` is None unless status is OPTIMAL.
    """
    nu = y0.size
    K = data.A.shape[0]
    A = np.concatenate([data.A, np.zeros((K, data.A.shape[1], 1))], axis=2)
    cc = np.concatenate([data.cc, np.ones((K, 1))], axis=1)
    G = np.vstack([
        np.hstack([data.G, -np.ones((data.G.shape[0], 1))]),
        np.eye(1, nu + 1, nu) * -1.0,
    ])
    g = np.concatenate([data.g, [1.0]])
    Q = np.zeros((nu + 1, nu + 1))
    c = np.zeros(nu + 1)
    c[-1] = 1.0
    args = (Q, c, np.ascontiguousarray(A), data.b, np.ascontiguousarray(cc), data.d,
            np.ascontiguousarray(G), g)
    theta = 2 * K + G.shape[0]

    s0 = max(_max_violation(y0, data), -0.5) + 1.0
    z = np.concatenate([y0, [s0]])
    t = st.t0
    steps = 0
    for _ in range(st.max_outer):
        z, it, reason = _center(kern, z, t, args, st, stop=lambda v: v[-1] < 0.0)
        steps += it
        if reason == "stopped" or z[-1] < 0.0:
            return z[:-1].copy(), steps, Status.OPTIMAL
        if reason == "limit":
            return None, steps, Status.ITERATION_LIMIT
        if z[-1] - theta / t > st.infeasible_tol or theta / t <= st.gap_tol:
            return None, steps, Status.INFEASIBLE
        t *= st.t_factor
    return None, steps, Status.ITERATION_LIMIT


def _barrier_duals(y, t, data: _Packed):
    """Multipliers implied by the barrier at ``y`` in normalized units."""
    K = data.A.shape[0]
    sigma = np.zeros(K)
    mu = np.zeros((K, data.A.shape[1]))
    if K:
        u = data.A @ y + data.b
        s = data.cc @ y + data.d
        D = s * s - np.einsum("kp,kp->k", u, u)
        sigma = 2.0 * s / (t * D)
        mu = -2.0 * u / (t * D[:, None])
    lam = 1.0 / (t * (data.g - data.G @ y)) if data.G.shape[0] else np.zeros(0)
    return sigma, mu, lam


def _refine_duals(y, sigma, mu, lam, data: _Packed):
    """Rescale barrier multipliers so the Lagrangian gradient vanishes.

    Barrier multipliers come from slacks of order ``1/t``; at the final ``t``
    those slacks are differences of O(1) numbers and carry only a few correct
    digits. Each multiplier ``z_j`` is replaced by ``z_j (1 + d_j)`` with the
    least-norm ``d`` restoring stationarity, so cone multipliers keep their
    direction and inactive ones (tiny ``z_j``) barely move. Cones at their
    apex are re-fitted freely and projected back onto the dual cone.
    """
    K = data.A.shape[0]
    apex = np.zeros(K, dtype=bool)
    if K:
        u = data.A @ y + data.b
        s = data.cc @ y + data.d
        tol = _APEX_TOL * (1.0 + np.max(np.abs(y), initial=0.0))
        apex = (np.abs(s) <= tol) & (np.linalg.norm(u, axis=1) <= tol)
    # a cone at its apex admits any multiplier in the dual cone, so it gets
    # free additive columns (sigma, mu) instead of a rescaling of a direction
    # that the barrier only knows to rounding accuracy
    cols, layout = [], []
    for k in range(K):
        if apex[k]:
            cols.append(-data.cc[k])
            cols.extend(-data.A[k, :data.rows[k]])
            layout.append(("apex", k))
        else:
            cols.append(-(sigma[k] * data.cc[k] + data.A[k].T @ mu[k]))
            layout.append(("scale", k))
    for i in range(data.G.shape[0]):
        cols.append(lam[i] * data.G[i])
    if not cols:
        return sigma, mu, lam
    J = np.array(cols).T
    base = data.Q @ y + data.c
    for k in range(K):
        if not apex[k]:
            base = base - (sigma[k] * data.cc[k] + data.A[k].T @ mu[k])
    if data.G.shape[0]:
        base = base + data.G.T @ lam
    # unknowns: apex multipliers in absolute terms, relative changes otherwise
    d, *_ = np.linalg.lstsq(J, -base, rcond=None)
    sigma, mu, lam = sigma.copy(), mu.copy(), lam.copy()
    j = 0
    for kind, k in layout:
        if kind == "apex":
            r = data.rows[k]
            sig, m = _soc_project(d[j], d[j + 1:j + 1 + r])
            sigma[k] = sig
            mu[k] = 0.0
            mu[k, :r] = m
            j += 1 + r
        else:
            f = max(1.0 + d[j], 0.0)
            sigma[k] *= f
            mu[k] *= f
            j += 1
    if data.G.shape[0]:
        lam = lam * np.maximum(1.0 + d[j:], 0.0)
    return sigma, mu, lam


def _soc_project(s: float, u: np.ndarray):
    """Euclidean projection of ``(s, u)`` onto ``{s >= ||u||}``."""
    nu = float(np.linalg.norm(u))
    if nu <= s:
        return s, u
    if nu <= -s:
        return 0.0, np.zeros_like(u)
    a = 0.5 * (s + nu)
    return a, u * (a / nu)


def _kkt_normalized(y, sigma, mu, lam, data: _Packed) -> KktResiduals:
    grad = data.Q @ y + data.c
    if data.A.shape[0]:
        grad = grad - sigma @ data.cc - np.einsum("kpv,kp->v", data.A, mu)
        u = data.A @ y + data.b
        s = data.cc @ y + data.d
        cone_viol = np.max(np.linalg.norm(u, axis=1) - s)
        comp_c = np.max(np.abs(sigma * s + np.einsum("kp,kp->k", mu, u)))
        dual_viol = np.max(np.linalg.norm(mu, axis=1) - sigma)
    else:
        cone_viol = comp_c = dual_viol = -np.inf
    if data.G.shape[0]:
        grad = grad + data.G.T @ lam
        sl = data.g - data.G @ y
        lin_viol = np.max(-sl)
        comp_l = np.max(np.abs(lam * sl))
        dual_viol = max(dual_viol, np.max(-lam))
    else:
        lin_viol = comp_l = -np.inf
    return KktResiduals(
        stationarity=float(np.linalg.norm(grad)),
        primal_feasibility=float(max(cone_viol, lin_viol, 0.0)),
        complementarity=float(max(comp_c, comp_l, 0.0)),
        dual_feasibility=float(max(dual_viol, 0.0)),
    )


def kkt_check(problem: ConicProblem, y, duals: Duals) -> KktResiduals:
    """KKT residuals of ``(y, duals)`` for ``problem`` after unit normalization.

    ``duals`` are in the problem's own units (as returned by :func:`solve`).
    The Lagrangian is ``f(y) - sum <(sigma_k, mu_k), (c_k'y + d_k, A_k y + b_k)>
    + lam'(G y - g)``.
    """
    data = pack(problem)
    y = np.asarray(y, dtype=float)
    K = data.A.shape[0]
    sigma = np.asarray(duals.sigma, dtype=float) * data.cone_scale / data.obj_scale
    mu = np.zeros((K, data.A.shape[1]))
    for k in range(K):
        mk = np.asarray(duals.mu[k], dtype=float)
        mu[k, : mk.size] = mk * data.cone_scale[k] / data.obj_scale
    lam = np.asarray(duals.lam, dtype=float) * data.lin_scale / data.obj_scale
    return _kkt_normalized(y, sigma, mu, lam, data)


def _to_problem_units(sigma, mu, lam, data: _Packed) -> Duals:
    scale = data.obj_scale
    mus = tuple(mu[k, : data.rows[k]] * scale / data.cone_scale[k] for k in range(mu.shape[0]))
    return Duals(
        sigma=sigma * scale / data.cone_scale,
        mu=mus,
        lam=lam * scale / data.lin_scale if lam.size else lam,
    )


def solve(problem: ConicProblem, y0=None, settings: SolverSettings | None = None,
          backend: str | None = None) -> ConicSolution:
    """Solve ``problem``; ``y0`` is an optional start, used directly if strictly feasible."""
    st = settings or SolverSettings()
    kern = _backend.get_kernels(backend)
    data = pack(problem)
    args = data.args()
    nu = problem.nu
    y = np.zeros(nu) if y0 is None else np.array(y0, dtype=float).reshape(nu)

    phase1_steps = 0
    if not kern.is_interior(y, data.A, data.b, data.cc, data.d, data.G, data.g):
        y, phase1_steps, status = _phase1(kern, y, data, st)
        if status != Status.OPTIMAL:
            return ConicSolution(
                y=np.full(nu, np.nan), objective=np.nan, status=status,
                phase1_steps=phase1_steps,
                message="no strictly feasible point" if status == Status.INFEASIBLE
                else "phase-I iteration limit",
            )

    t = st.t0
    theta = data.theta
    newton = 0
    path = []
    status = Status.ITERATION_LIMIT
    outer = 0
    for outer in range(1, st.max_outer + 1):
        y, it, reason = _center(kern, y, t, args, st)
        newton += it
        if reason == "limit":
            log.debug("centering hit %d Newton steps at t=%g", st.max_newton, t)
            break
        path.append(problem.objective(y))
        if theta == 0 or theta / t <= st.gap_tol:
            # Newton converges quadratically near the center; a few more steps
            # at the final t drive the stationarity residual to rounding level
            y, it, _ = _center(kern, y, t, args, replace(st, newton_tol=st.polish_tol,
                                                         max_newton=st.polish_steps))
            newton += it
            status = Status.OPTIMAL
            break
        t *= st.t_factor

    sigma, mu, lam = _barrier_duals(y, t, data)
    if status == Status.OPTIMAL:
        sigma, mu, lam = _refine_duals(y, sigma, mu, lam, data)
    kkt = _kkt_normalized(y, sigma, mu, lam, data)
    return ConicSolution(
        y=y,
        objective=problem.objective(y),
        status=status,
        kkt=kkt,
        duals=_to_problem_units(sigma, mu, lam, data),
        newton_steps=newton,
        outer_iterations=outer,
        phase1_steps=phase1_steps,
        path_objectives=path,
    )
