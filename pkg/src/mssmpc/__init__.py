"""Measured-state stochastic MPC.

Offline design of ellipsoidal reachable sets, the online relaxed conic
control problem, an initial-state baseline and a seeded Monte-Carlo harness.
"""

from .baseline import DualModeState, InitiallyInfeasible, IsOptions, is_smpc_step, solve_is
from .config import (
    ConfigError,
    RunConfig,
    benchmark_config,
    benchmark_design,
    load_config,
    load_design,
    save_design,
)
from .controller import (
    ControllerError,
    OcpSolution,
    aposteriori_bounds,
    build_ocp,
    control_step,
    solve_ocp,
)
from .lqr import LqrResult, solve_lqr
from .model import Ellipsoid, LinearSystem, Polytope, inscribed_radius
from .offline import (
    DesignArtifacts,
    DesignInfeasible,
    certify_convergence,
    check_certificate,
    design,
    rho_from_eps,
    verify_design,
)
from .sim import ControllerSpec, McSummary, RngStream, bound_table, monte_carlo, run_episode
from .socp import BACKEND

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ConfigError",
    "ControllerError",
    "ControllerSpec",
    "DesignArtifacts",
    "DesignInfeasible",
    "DualModeState",
    "Ellipsoid",
    "InitiallyInfeasible",
    "IsOptions",
    "LinearSystem",
    "LqrResult",
    "McSummary",
    "OcpSolution",
    "Polytope",
    "RngStream",
    "RunConfig",
    "aposteriori_bounds",
    "benchmark_config",
    "benchmark_design",
    "bound_table",
    "build_ocp",
    "certify_convergence",
    "check_certificate",
    "control_step",
    "design",
    "inscribed_radius",
    "is_smpc_step",
    "load_config",
    "load_design",
    "monte_carlo",
    "rho_from_eps",
    "run_episode",
    "save_design",
    "solve_is",
    "solve_lqr",
    "solve_ocp",
    "verify_design",
]
