"""Hybridizable discontinuous Galerkin solver for u_t + u_xxx + F(u)_x = f in one dimension."""

from .flux import FluxSpec, StabilizationParams, TauFRule, check_stability_conditions
from .mesh import Mesh, build_uniform_mesh
from .polybasis import ReferenceBasis, build_reference_basis
from .stepper import (
    Discretization,
    NewtonError,
    NewtonSettings,
    ProblemSpec,
    SolutionState,
    backward_euler_step,
    initial_state,
    integrate,
    midpoint_step,
)
from .verify import eoc, hdg_projection, l2_error

__version__ = "0.1.0"

__all__ = [
    "Discretization",
    "FluxSpec",
    "Mesh",
    "NewtonError",
    "NewtonSettings",
    "ProblemSpec",
    "ReferenceBasis",
    "SolutionState",
    "StabilizationParams",
    "TauFRule",
    "backward_euler_step",
    "build_reference_basis",
    "build_uniform_mesh",
    "check_stability_conditions",
    "eoc",
    "hdg_projection",
    "initial_state",
    "integrate",
    "l2_error",
    "midpoint_step",
]
