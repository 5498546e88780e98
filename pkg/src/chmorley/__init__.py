"""Morley nonconforming finite elements for the Cahn-Hilliard equation."""
from .fields import ScalarField, ellipse_field, initial_condition, two_circle_field
from .mesh import Mesh, build_uniform_mesh
from .morley import MorleyFunction, interpolate, mean_value
from .norms import ErrorReport, broken_norm, energy
from .stepper import SchemeParams, SolverError, Stepper, run

__all__ = [
    "ErrorReport",
    "Mesh",
    "MorleyFunction",
    "ScalarField",
    "SchemeParams",
    "SolverError",
    "Stepper",
    "broken_norm",
    "build_uniform_mesh",
    "ellipse_field",
    "energy",
    "initial_condition",
    "interpolate",
    "mean_value",
    "run",
    "two_circle_field",
]

__version__ = "0.1.0"
