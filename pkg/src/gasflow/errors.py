"""Exception types shared across the package."""


class GasflowError(Exception):
    """Base class for package-specific errors."""


class ValidationError(GasflowError, ValueError):
    """Raised when input data fails structural validation.

    ``details`` carries one human-readable message per offending field so
    callers can report every problem at once instead of the first hit.
    """

    def __init__(self, message, details=None):
        super().__init__(message)
        self.details = list(details) if details is not None else []


class NumericalFailure(GasflowError, RuntimeError):
    """Raised when a solve cannot be completed to numerical tolerance."""


class ResourceLimit(GasflowError, RuntimeError):
    """Raised when an iteration or node budget is exhausted before convergence."""
