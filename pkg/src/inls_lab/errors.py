"""Exception types shared across the lab.

CLI exit codes: invalid configuration -> 2, numeric failure -> 3.
"""


class LabError(Exception):
    exit_code = 1


class InvalidConfiguration(LabError, ValueError):
    exit_code = 2


class InvalidExponent(InvalidConfiguration):
    pass


class IncompatibleFields(LabError, ValueError):
    exit_code = 2


class NumericFailure(LabError, RuntimeError):
    exit_code = 3


class SolverFailure(NumericFailure):
    """Shooting could not bracket or converge."""

    def __init__(self, message, diagnostic=None):
        super().__init__(message)
        self.diagnostic = diagnostic or {}


class FitDomainError(NumericFailure, ValueError):
    pass


class ModulationUndefined(NumericFailure):
    """Solution too far from the ground-state orbit: <u, Q> vanishes."""


class InsufficientData(LabError, ValueError):
    exit_code = 2


class ConstructionFailure(NumericFailure):
    """No threshold normalization exists for the requested perturbation."""
