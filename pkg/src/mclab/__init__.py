"""Simulation and verification laboratory for multiplicative coalescent processes."""

from .core import MassVector, ParamTriple, grind, join, ord_masses, s_k
from .errors import CapacityError, DomainError, InvalidInputError
from .stats import EstimateWithCI

__all__ = [
    "MassVector",
    "ParamTriple",
    "ord_masses",
    "s_k",
    "join",
    "grind",
    "EstimateWithCI",
    "InvalidInputError",
    "CapacityError",
    "DomainError",
]

__version__ = "0.1.0"
