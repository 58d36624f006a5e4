"""Discrete lattice and continuum Hamilton-Jacobi models of data moving through a processor network."""

from .errors import (
    ConfigError,
    DegenerateConfigurationError,
    DomainError,
    HpcflowError,
    InputError,
    ParameterError,
    SimulationError,
)
from .model import ModelParams, ThrottleState, phi0, phi0_piecewise, phi1, w_composite
from .profiles import AlphaProfile, FieldSpec

__all__ = [
    "AlphaProfile",
    "ConfigError",
    "DegenerateConfigurationError",
    "DomainError",
    "FieldSpec",
    "HpcflowError",
    "InputError",
    "ModelParams",
    "ParameterError",
    "SimulationError",
    "ThrottleState",
    "phi0",
    "phi0_piecewise",
    "phi1",
    "w_composite",
]
