"""Exception hierarchy.

Every error carries the CLI exit code it maps to, so the command layer can
translate failures without a lookup table.
"""

from __future__ import annotations


class EPCircuitError(Exception):
    exit_code = 1


class ConfigError(EPCircuitError, ValueError):
    exit_code = 2


class PreconditionError(EPCircuitError, ValueError):
    """An operation was called with inputs outside its domain."""

    exit_code = 4


class InvalidCouplingError(PreconditionError):
    pass


class DomainError(PreconditionError):
    pass


class ResolutionError(PreconditionError):
    pass


class InsufficientDataError(PreconditionError):
    pass


class NormalizationError(PreconditionError):
    pass


class DiabolicCaseError(PreconditionError):
    pass


class NumericalError(EPCircuitError, ArithmeticError):
    exit_code = 3


class DegeneratePolynomialError(NumericalError):
    pass


class NearSingularError(NumericalError):
    pass


class ResonanceSingularityError(NearSingularError):
    def __init__(self, message: str, eigenvalue: complex):
        super().__init__(message)
        self.eigenvalue = eigenvalue


class DegenerateRankError(NumericalError):
    """The null space at a degeneracy is at least two dimensional."""


class DiabolicPointError(DegenerateRankError):
    pass


class IterationLimitError(NumericalError):
    def __init__(self, message: str, residuals: tuple[float, float] | None = None):
        super().__init__(message)
        self.residuals = residuals


class SeedFailureError(NumericalError):
    pass


class FitDegenerateError(NumericalError):
    pass
