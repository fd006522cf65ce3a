"""Problem and solution records for the second-order cone solver."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class Status(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    ITERATION_LIMIT = "iteration_limit"


@dataclass(frozen=True)
class Cone:
    """``||A y + b|| <= c^T y + d``."""

    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: float

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.asarray(self.b, dtype=float).reshape(-1)
        c = np.asarray(self.c, dtype=float).reshape(-1)
        if A.shape[0] < 1 or A.shape[0] != b.size or A.shape[1] != c.size:
            raise ValueError(f"inconsistent cone data A{A.shape} b{b.shape} c{c.shape}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "d", float(self.d))


@dataclass(frozen=True)
class ConicProblem:
    """Minimize ``0.5 y'Qy + c'y + const`` over second-order cones and ``G y <= g``."""

    Qhat: np.ndarray
    chat: np.ndarray
    cones: tuple = ()
    G: np.ndarray | None = None
    g: np.ndarray | None = None
    const: float = 0.0

    def __post_init__(self):
        chat = np.asarray(self.chat, dtype=float).reshape(-1)
        nu = chat.size
        Q = np.asarray(self.Qhat, dtype=float).reshape(nu, nu)
        if np.abs(Q - Q.T).max(initial=0.0) > 1e-12 * max(1.0, np.abs(Q).max(initial=0.0)):
            raise ValueError("cost Hessian must be symmetric")
        Q = 0.5 * (Q + Q.T)
        cones = tuple(self.cones)
        for k, cone in enumerate(cones):
            if cone.c.size != nu:
                raise ValueError(f"cone {k} acts on {cone.c.size} variables, problem has {nu}")
        if self.G is None:
            G = np.zeros((0, nu))
            g = np.zeros(0)
        else:
            G = np.atleast_2d(np.asarray(self.G, dtype=float)).reshape(-1, nu)
            g = np.asarray(self.g, dtype=float).reshape(-1)
            if G.shape[0] != g.size:
                raise ValueError(f"G has {G.shape[0]} rows, g has {g.size}")
        object.__setattr__(self, "Qhat", Q)
        object.__setattr__(self, "chat", chat)
        object.__setattr__(self, "cones", cones)
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "const", float(self.const))

    @property
    def nu(self) -> int:
        return self.chat.size

    @property
    def barrier_parameter(self) -> int:
        # each second-order cone contributes 2, each halfspace 1
        return 2 * len(self.cones) + self.G.shape[0]

    def objective(self, y) -> float:
        y = np.asarray(y, dtype=float)
        return float(0.5 * y @ self.Qhat @ y + self.chat @ y + self.const)

    def violation(self, y) -> float:
        """Largest constraint violation at ``y`` (0 when feasible)."""
        y = np.asarray(y, dtype=float)
        worst = 0.0
        for cone in self.cones:
            worst = max(worst, np.linalg.norm(cone.A @ y + cone.b) - (cone.c @ y + cone.d))
        if self.G.shape[0]:
            worst = max(worst, float(np.max(self.G @ y - self.g)))
        return float(worst)


@dataclass(frozen=True)
class SolverSettings:
    newton_tol: float = 1e-9
    armijo_slope: float = 0.25
    armijo_shrink: float = 0.5
    t0: float = 1.0
    t_factor: float = 10.0
    gap_tol: float = 1e-8
    max_newton: int = 200
    max_outer: int = 40
    infeasible_tol: float = 1e-9
    polish_tol: float = 1e-24
    polish_steps: int = 20


@dataclass(frozen=True)
class KktResiduals:
    stationarity: float
    primal_feasibility: float
    complementarity: float
    dual_feasibility: float = 0.0

    def max(self) -> float:
        return max(self.stationarity, self.primal_feasibility, self.complementarity,
                   self.dual_feasibility)


@dataclass(frozen=True)
class Duals:
    """Cone multipliers ``(sigma_k, mu_k)`` with ``sigma_k >= ||mu_k||`` and halfspace multipliers."""

    sigma: np.ndarray
    mu: tuple
    lam: np.ndarray


@dataclass
class ConicSolution:
    y: np.ndarray
    objective: float
    status: Status
    kkt: KktResiduals | None = None
    duals: Duals | None = None
    newton_steps: int = 0
    outer_iterations: int = 0
    phase1_steps: int = 0
    path_objectives: list = field(default_factory=list)
    message: str = ""

    @property
    def optimal(self) -> bool:
        return self.status == Status.OPTIMAL
