"""Solitons of the nonlinear Schroedinger equation on hyperbolic space."""

from .geometry import ModelError, ModelParams, RadialField, RadialGrid, Space, conjugate, default_r_max
from .ground_state import GroundStateSolution, SolverError, gradient_flow_minimize, shooting_solve
from .nonlinearity import NonlinearitySpec

__all__ = [
    "GroundStateSolution",
    "ModelError",
    "ModelParams",
    "NonlinearitySpec",
    "RadialField",
    "RadialGrid",
    "SolverError",
    "Space",
    "conjugate",
    "default_r_max",
    "gradient_flow_minimize",
    "shooting_solve",
]
