"""Automatic model reduction for multiscale ODE systems.

Resolve the fast time scales in a short simulation, fit a constant subgrid
model for their averaged effect, solve the reduced system cheaply over long
intervals, and bound the combined discretization + modeling error through a
backward dual problem.
"""

from .averaging import AverageWindow, average_trajectory, moving_average, variance
from .dual import (
    ControlPoint,
    ControlPointReport,
    DualProblem,
    ErrorEstimate,
    error_estimate,
    measure_gbar,
    solve_dual,
    stability_factors,
    validate_at_control_points,
)
from .integrator import (
    ConvergenceError,
    SolverOptions,
    TimePartition,
    residual_samples,
    solve_cg1,
)
from .problems import (
    LatticeSpec,
    SimpleModelSpec,
    analytic_reduced_simple,
    diameter,
    lattice_equilibrium,
    make_lattice,
    make_simple_model,
    small_mass_distance,
)
from .reduction import (
    ModelingOptions,
    ReducedSystem,
    SubgridModel,
    assemble_reduced,
    auto_model,
    build_reduced,
    fit_constant_subgrid,
    resolve_short,
)
from .system import (
    DynamicalSystem,
    EvaluationError,
    Trajectory,
    evaluate_rhs,
    jacobian,
    trajectory_eval,
)

__all__ = [
    "AverageWindow",
    "ControlPoint",
    "ControlPointReport",
    "ConvergenceError",
    "DualProblem",
    "DynamicalSystem",
    "ErrorEstimate",
    "EvaluationError",
    "LatticeSpec",
    "ModelingOptions",
    "ReducedSystem",
    "SimpleModelSpec",
    "SolverOptions",
    "SubgridModel",
    "TimePartition",
    "Trajectory",
    "analytic_reduced_simple",
    "assemble_reduced",
    "auto_model",
    "average_trajectory",
    "build_reduced",
    "diameter",
    "error_estimate",
    "evaluate_rhs",
    "fit_constant_subgrid",
    "jacobian",
    "lattice_equilibrium",
    "make_lattice",
    "make_simple_model",
    "measure_gbar",
    "moving_average",
    "residual_samples",
    "resolve_short",
    "small_mass_distance",
    "solve_cg1",
    "solve_dual",
    "stability_factors",
    "trajectory_eval",
    "validate_at_control_points",
    "variance",
]

__version__ = "0.1.0"
