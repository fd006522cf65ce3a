"""Small dense second-order cone solver (log-barrier interior point)."""

from ._backend import BACKEND, get_kernels
from .problem import (
    Cone,
    ConicProblem,
    ConicSolution,
    Duals,
    KktResiduals,
    SolverSettings,
    Status,
)
from .solver import kkt_check, solve

__all__ = [
    "BACKEND",
    "Cone",
    "ConicProblem",
    "ConicSolution",
    "Duals",
    "KktResiduals",
    "SolverSettings",
    "Status",
    "get_kernels",
    "kkt_check",
    "solve",
]
