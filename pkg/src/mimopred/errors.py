"""Exception hierarchy.

Every error raised on purpose by this package derives from
:class:`WorkbenchError` and carries an ``exit_code`` so the command line
front end can map failure categories to process exit codes without
inspecting messages: configuration problems exit 2, data problems exit 3,
numeric problems exit 4.
"""


class WorkbenchError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigurationError(WorkbenchError):
    """Invalid, unknown, or inconsistent configuration values."""

    exit_code = 2


class DataError(WorkbenchError):
    """Malformed, missing, or insufficient input data."""

    exit_code = 3


class DimensionError(DataError):
    """Operands whose shapes cannot be combined."""


class DatasetError(DataError):
    """Task or sample sets that violate size or disjointness requirements."""


class IntegrityError(DataError):
    """Corrupt or truncated serialized artifacts."""


class NumericError(WorkbenchError):
    """Computations that produced or would produce non-finite results."""

    exit_code = 4


class SingularMatrixError(NumericError):
    """Matrix inversion attempted on an effectively rank-deficient matrix."""
