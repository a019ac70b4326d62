"""Exception hierarchy shared across the package."""

from __future__ import annotations


class StivError(Exception):
    """Base class for all package errors."""


class ParseError(StivError):
    """Raised when tabular input cannot be parsed into a dataset."""


class ValidationError(StivError):
    """Raised when inputs violate a documented invariant."""


class DimensionError(ValidationError):
    """Raised when array dimensions are inconsistent (e.g. fewer instruments than regressors)."""


class DegenerateScalingError(ValidationError):
    """Raised when a column scale is zero and normalization is undefined."""


class DegenerateLevelError(ValidationError):
    """Raised when the practical rate calibration is requested with a single instrument."""


class EnumerationCapError(StivError):
    """Raised when an exact sensitivity would require enumerating too many sign patterns."""


class DegenerateInstrumentError(StivError):
    """Raised when an estimated projection instrument is identically zero."""

    def __init__(self, endogenous_index: int):
        self.endogenous_index = endogenous_index
        super().__init__(
            f"fitted projection instrument for endogenous regressor "
            f"{endogenous_index} is identically zero"
        )


class SolverFailureError(StivError):
    """Raised when an optimization backend reports a non-optimal terminal status."""

    def __init__(self, message: str, result=None):
        self.result = result
        super().__init__(message)


class NumericalError(StivError):
    """Raised when a numerical routine cannot reach its accuracy target."""


class ConfigurationError(StivError):
    """Raised when a requested computation lacks a required ingredient."""
