"""Exception hierarchy.

The CLI maps ValidationError to exit code 2, NumericError to exit code 3,
and OSError to exit code 4.
"""


class AnisoForestError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(AnisoForestError):
    """Invalid input data, configuration, or argument."""


class NumericError(AnisoForestError):
    """Numerical failure during an otherwise valid computation."""


class DimensionMismatch(ValidationError):
    """Operands have incompatible dimensions."""


class NotPositiveDefinite(ValidationError):
    """Matrix is not positive definite (Cholesky pivot <= 1e-12)."""


class ZeroMatrix(ValidationError):
    """Matrix has (numerically) zero spectral radius."""


class SubsampleTooLarge(ValidationError):
    """Requested subsample size exceeds the number of data rows."""


class EmptyInput(ValidationError):
    """An operation received no data rows."""


class TooFewAnomalies(ValidationError):
    """A flagged group has fewer than two rows, too few to compare."""


class ConfigError(ValidationError):
    """Malformed configuration or model file."""


class DataFormatError(ValidationError):
    """Malformed dataset file (non-numeric cell, ragged row, bad header)."""


class ConvergenceFailure(NumericError):
    """An iterative numerical scheme exceeded its iteration budget."""


class DegenerateNormal(NumericError):
    """All surviving components of a split normal are zero."""


class EmptyRegion(NumericError):
    """Rejection sampling found no member of a sphere region."""
