"""Multi-adaptive continuous and discontinuous Galerkin solvers for ODEs."""

from .controller import AdaptiveResult, ControllerState, StepController, adaptive_solve
from .dual import DualData, dual_data_presets, fundamental_matrix, solve_dual, stability_weights
from .iteration import ConvergenceReport, IterationConfig
from .problems import ProblemSpec, make_problem
from .solver import FixedSteps, MethodConfig, SolverError, solve_multiadaptive, solve_uniform
from .system import OdeSystem, Solution, UniformSolution, read_trajectory, write_trajectory
from .tableau import get_tableau

__all__ = [
    "AdaptiveResult",
    "ControllerState",
    "ConvergenceReport",
    "DualData",
    "FixedSteps",
    "IterationConfig",
    "MethodConfig",
    "OdeSystem",
    "ProblemSpec",
    "Solution",
    "SolverError",
    "StepController",
    "UniformSolution",
    "adaptive_solve",
    "dual_data_presets",
    "fundamental_matrix",
    "get_tableau",
    "make_problem",
    "read_trajectory",
    "solve_dual",
    "solve_multiadaptive",
    "solve_uniform",
    "stability_weights",
    "write_trajectory",
]
