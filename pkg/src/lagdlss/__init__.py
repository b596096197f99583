"""Lagrangian minimizing-movement solver for the one-dimensional DLSS equation."""

from .errors import LagDLSSError, MonotonicityError, NonConvergence, StepError
from .grid import Domain, LagrangianState, MassGrid, uniform_mass_grid
from .solver import AdaptiveSchedule, FallbackPolicy, FixedSchedule, SolverConfig, Trajectory, newton_step, run

__version__ = "0.1.0"

__all__ = [
    "LagDLSSError", "MonotonicityError", "NonConvergence", "StepError",
    "Domain", "LagrangianState", "MassGrid", "uniform_mass_grid",
    "AdaptiveSchedule", "FallbackPolicy", "FixedSchedule", "SolverConfig", "Trajectory", "newton_step", "run",
]
