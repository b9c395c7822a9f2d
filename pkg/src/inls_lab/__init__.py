"""Numerical lab for the radial cubic inhomogeneous NLS  i u_t + Delta u + |x|^{-b} |u|^2 u = 0  in R^3."""
from .errors import (ConstructionFailure, FitDomainError, IncompatibleFields, InsufficientData,
                     InvalidConfiguration, InvalidExponent, LabError, ModulationUndefined,
                     NumericFailure, SolverFailure)
from .radial_core import RadialField, RadialGrid, make_grid

__all__ = [
    "RadialField", "RadialGrid", "make_grid", "LabError", "InvalidConfiguration",
    "InvalidExponent", "IncompatibleFields", "NumericFailure", "SolverFailure",
    "FitDomainError", "ModulationUndefined", "InsufficientData", "ConstructionFailure",
]
