"""Seeded closed-loop Monte-Carlo simulation and statistics.

Every episode owns a counter-based random stream keyed by ``(seed, episode)``,
so results do not depend on how episodes are spread over worker processes.
Summaries are reduced in episode order.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .baseline import DualModeState, IsOptions, is_smpc_step
from .controller import (
    STRATEGIES,
    ControllerError,
    OcpSolution,
    aposteriori_bounds,
    solve_ocp,
)
from .model import as_vector
from .offline import DesignArtifacts
from .special import chi2_cdf

__all__ = [
    "ControllerSpec",
    "EpisodeError",
    "EpisodeTrace",
    "McSummary",
    "RngStream",
    "bound_table",
    "chi2_cdf",
    "monte_carlo",
    "run_episode",
]

log = logging.getLogger(__name__)

_UINT64 = (1 << 64) - 1


def noise_factor(Gamma) -> np.ndarray:
    """``L`` with ``L L' = Gamma``; Cholesky when possible, symmetric root otherwise."""
    Gamma = np.asarray(Gamma, dtype=float)
    try:
        return np.linalg.cholesky(Gamma)
    except np.linalg.LinAlgError:
        ev, V = np.linalg.eigh(0.5 * (Gamma + Gamma.T))
        return V * np.sqrt(np.clip(ev, 0.0, None))


class RngStream:
    """Gaussian noise ``w = L xi`` from a Philox stream keyed by ``(seed, stream_id)``.

    Standard normals come from the Box-Muller transform applied to pairs of
    uniforms in ``(0, 1]``; the Philox counter makes each stream independent
    of every other and of call scheduling.
    """

    def __init__(self, seed: int, stream_id: int, Gamma):
        self.seed = int(seed) & _UINT64
        self.stream_id = int(stream_id) & _UINT64
        key = np.array([self.seed, self.stream_id], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))
        self.L = noise_factor(Gamma)

    def uniforms(self, size: int) -> np.ndarray:
        """Uniforms in ``(0, 1]``."""
        return 1.0 - self._gen.random(size)

    def standard_normal(self, size: int) -> np.ndarray:
        pairs = (size + 1) // 2
        u1 = self.uniforms(pairs)
        u2 = self.uniforms(pairs)
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * math.pi * u2
        return np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:size]

    def noise(self, steps: int) -> np.ndarray:
        """``(steps, n)`` disturbance samples with covariance ``L L'``."""
        n = self.L.shape[0]
        xi = self.standard_normal(steps * n).reshape(steps, n)
        return xi @ self.L.T


@dataclass(frozen=True)
class ControllerSpec:
    """Which controller an episode runs.

    ``kind`` is ``"ms"`` (relaxed, with ``strategy`` A/B/C) or ``"is"``
    (baseline with ``is_options``). ``shortcut`` returns the LQR rollout
    without calling the solver whenever it is feasible, which is exact.
    """

    kind: str = "ms"
    strategy: str = "A"
    is_options: IsOptions = IsOptions()
    shortcut: bool = True

    def __post_init__(self):
        if self.kind not in ("ms", "is"):
            raise ValueError(f"unknown controller {self.kind!r}; expected 'ms' or 'is'")
        if self.kind == "ms" and self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")

    @property
    def label(self) -> str:
        return f"ms-{self.strategy}" if self.kind == "ms" else "is"


class EpisodeError(RuntimeError):
    """A controller failure inside an episode, with the step it happened at."""

    def __init__(self, step: int, cause: Exception):
        super().__init__(f"step {step}: {cause}")
        self.step = step
        self.cause = cause


@dataclass
class EpisodeTrace:
    """Realized closed loop; ``x`` has ``horizon + 1`` rows, the rest ``horizon``."""

    x: np.ndarray
    u: np.ndarray
    gamma_x: np.ndarray
    gamma_u: np.ndarray
    stage_cost: np.ndarray
    mode: list
    status: list
    seed: int
    stream_id: int
    sol0: OcpSolution | None = field(default=None, repr=False)

    @property
    def horizon(self) -> int:
        return self.u.shape[0]

    @property
    def J_mpc(self) -> float:
        return float(np.sum(self.stage_cost))


def run_episode(art: DesignArtifacts, controller: ControllerSpec, x0, horizon: int,
                rng: RngStream) -> EpisodeTrace:
    """Closed loop for ``horizon`` steps from ``x0`` with noise drawn from ``rng``."""
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    x = as_vector(x0, "x0").copy()
    n, m = art.n, art.m
    W = rng.noise(horizon)
    xs = np.empty((horizon + 1, n))
    us = np.empty((horizon, m))
    gx = np.empty(horizon)
    gu = np.empty(horizon)
    cost = np.empty(horizon)
    modes, statuses = [], []
    state = DualModeState()
    sol0 = None
    xs[0] = x
    for k in range(horizon):
        try:
            if controller.kind == "ms":
                sol = solve_ocp(art, x, controller.strategy, shortcut=controller.shortcut)
                u = sol.u0
                mode = "measured"
            else:
                u, state = is_smpc_step(art, x, state, controller.is_options,
                                        shortcut=controller.shortcut)
                sol = state.last_solution
                mode = state.mode
        except ControllerError as exc:
            if k == 0:
                raise
            raise EpisodeError(k, exc) from exc
        if k == 0:
            sol0 = sol
        us[k] = u
        gx[k] = sol.gamma_x
        gu[k] = sol.gamma_u
        cost[k] = float(x @ art.Q @ x + u @ art.R @ u)
        modes.append(mode)
        statuses.append(sol.status.value)
        x = art.sys.A @ x + art.sys.B @ u + W[k]
        xs[k + 1] = x
    return EpisodeTrace(x=xs, u=us, gamma_x=gx, gamma_u=gu, stage_cost=cost, mode=modes,
                        status=statuses, seed=rng.seed, stream_id=rng.stream_id, sol0=sol0)


@dataclass
class McSummary:
    """Campaign statistics.

    ``inside_x[k]`` / ``inside_u[k]`` count episodes with ``x_k`` in
    ``E_{W_x}(r_x)`` / ``u_k`` in ``E_{W_u}(r_u)``; the ``poly`` variants count
    membership of the polytopes instead.
    """

    controller: str
    x0: np.ndarray
    horizon: int
    seed: int
    episodes: int
    J: np.ndarray  # per episode, NaN for failures
    failures: int
    failure_messages: list
    inside_x: np.ndarray
    inside_u: np.ndarray
    inside_x_poly: np.ndarray
    inside_u_poly: np.ndarray
    mean_gamma_x: np.ndarray
    mean_gamma_u: np.ndarray
    hist_edges: np.ndarray
    hist_counts: np.ndarray
    traces: list = field(repr=False, default_factory=list)

    @property
    def n_sim(self) -> int:
        return self.episodes - self.failures

    @property
    def J_mean(self) -> float:
        ok = self.J[np.isfinite(self.J)]
        return float(ok.mean()) if ok.size else math.nan

    @property
    def J_std(self) -> float:
        ok = self.J[np.isfinite(self.J)]
        return float(ok.std(ddof=1)) if ok.size > 1 else 0.0

    def frequencies(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-step frequencies of ellipsoidal constraint satisfaction."""
        n = max(self.n_sim, 1)
        return self.inside_x / n, self.inside_u / n


def _episode_job(args):
    art, controller, x0, horizon, seed, idx = args
    rng = RngStream(seed, idx, art.sys.Gamma_w)
    try:
        return idx, run_episode(art, controller, x0, horizon, rng), None
    except (ControllerError, EpisodeError) as exc:
        if idx == 0 and not isinstance(exc, EpisodeError):
            # failure at the very first measurement is a property of x0, not of the noise
            raise
        return idx, None, f"episode {idx}: {exc}"


def _run_all(jobs, workers: int):
    if workers <= 1 or len(jobs) <= 1:
        return [_episode_job(j) for j in jobs]
    chunk = max(1, len(jobs) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_episode_job, jobs, chunksize=chunk))


def _inside_ellipsoid(Winv_sqrt, r, pts) -> np.ndarray:
    return np.linalg.norm(pts @ Winv_sqrt.T, axis=-1) <= r * (1.0 + 1e-9)


def monte_carlo(art: DesignArtifacts, controller: ControllerSpec, x0, horizon: int,
                episodes: int, seed: int, *, workers: int = 1, bins: int = 30,
                keep_traces: bool = True) -> McSummary:
    """Run ``episodes`` closed loops with streams ``0..episodes-1`` of ``seed``."""
    if episodes < 1:
        raise ValueError("need at least one episode")
    x0 = as_vector(x0, "x0")
    jobs = [(art, controller, x0, horizon, seed, i) for i in range(episodes)]
    results = sorted(_run_all(jobs, workers), key=lambda r: r[0])

    H = horizon
    J = np.full(episodes, np.nan)
    inside_x = np.zeros(H + 1, dtype=np.int64)
    inside_u = np.zeros(H, dtype=np.int64)
    inside_xp = np.zeros(H + 1, dtype=np.int64)
    inside_up = np.zeros(H, dtype=np.int64)
    sum_gx = np.zeros(H)
    sum_gu = np.zeros(H)
    traces, messages = [], []
    for idx, tr, msg in results:
        if tr is None:
            messages.append(msg)
            continue
        J[idx] = tr.J_mpc
        inside_x += _inside_ellipsoid(art.W_x_inv_sqrt, art.r_x, tr.x)
        inside_u += _inside_ellipsoid(art.W_u_inv_sqrt, art.r_u, tr.u)
        inside_xp += np.all(tr.x @ art.X.H.T <= art.X.h, axis=1)
        inside_up += np.all(tr.u @ art.U.H.T <= art.U.h, axis=1)
        sum_gx += tr.gamma_x
        sum_gu += tr.gamma_u
        if keep_traces:
            traces.append(tr)
    ok = J[np.isfinite(J)]
    n_ok = ok.size
    if n_ok:
        lo, hi = float(ok.min()), float(ok.max())
        if hi <= lo:
            hi = lo + 1.0
        counts, edges = np.histogram(ok, bins=bins, range=(lo, hi))
    else:
        counts, edges = np.zeros(bins, dtype=np.int64), np.linspace(0.0, 1.0, bins + 1)
    denom = max(n_ok, 1)
    return McSummary(
        controller=controller.label, x0=x0, horizon=H, seed=seed, episodes=episodes, J=J,
        failures=episodes - n_ok, failure_messages=messages,
        inside_x=inside_x, inside_u=inside_u, inside_x_poly=inside_xp, inside_u_poly=inside_up,
        mean_gamma_x=sum_gx / denom, mean_gamma_u=sum_gu / denom,
        hist_edges=edges, hist_counts=counts, traces=traces,
    )


@dataclass(frozen=True)
class BoundRow:
    ell: int
    p_x: float
    p_u: float
    f_x: float
    f_u: float


def bound_table(traces, sol0: OcpSolution, art: DesignArtifacts) -> list:
    """Predicted probability bounds against realized frequencies for ``l = 1..N``.

    ``p`` comes from the a-posteriori radii of the first solution (0 where the
    radius is undefined); ``f`` is the fraction of traces with ``x_l`` in
    ``E_{W_x}(r_x)`` and ``u_l`` in ``E_{W_u}(r_u)``, NaN beyond the simulated
    horizon.
    """
    bounds = aposteriori_bounds(sol0, art)
    rows = []
    for ell in range(1, art.N + 1):
        fx = fu = math.nan
        xs = [tr.x[ell] for tr in traces if ell <= tr.horizon]
        us = [tr.u[ell] for tr in traces if ell < tr.horizon]
        if xs:
            fx = float(np.mean(_inside_ellipsoid(art.W_x_inv_sqrt, art.r_x, np.array(xs))))
        if us:
            fu = float(np.mean(_inside_ellipsoid(art.W_u_inv_sqrt, art.r_u, np.array(us))))
        rows.append(BoundRow(ell, float(bounds.p_x[ell - 1]), float(bounds.p_u[ell - 1]), fx, fu))
    return rows
