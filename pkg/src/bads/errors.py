"""Exception hierarchy shared across the package."""


class BadsError(Exception):
    """Base class for all package errors."""


class ParameterError(BadsError, ValueError):
    """A parameter is outside its mathematical domain."""


class NumericalDegeneracyError(BadsError):
    """A matrix could not be factorized even after jitter escalation."""


class ConvergenceError(BadsError):
    """EP site updates did not reach a fixed point within the sweep cap."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


class OptimizationError(BadsError):
    """Every restart of a hyperparameter search failed."""


class EvidenceError(BadsError):
    """No usable mixture component survived for an evidence computation."""
