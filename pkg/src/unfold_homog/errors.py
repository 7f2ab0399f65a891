"""Exception hierarchy shared across the package.

Validation problems (bad config, incompatible atlas, misaligned grids)
and numeric failures (divergent CG, indefinite tensors) are kept apart
so the CLI can map them to distinct exit codes.
"""


class UnfoldHomogError(Exception):
    """Base class for all package errors."""


class ValidationError(UnfoldHomogError):
    """Invalid configuration, geometry, or discretization setup."""


class ConfigurationError(ValidationError):
    """Malformed or inconsistent run configuration."""


class GeometryError(ValidationError):
    """Atlas, chart, or metric violates its contract (SPD failure, bad box)."""


class AlignmentError(ValidationError):
    """Grid spacing, cell size, and chart anchor are not lattice-compatible."""

    def __init__(self, message, axis=None):
        super().__init__(message)
        self.axis = axis


class NumericError(UnfoldHomogError):
    """A solver or numeric check failed after validation passed."""


class SolverError(NumericError):
    """Iterative solve did not reach the requested tolerance."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations
