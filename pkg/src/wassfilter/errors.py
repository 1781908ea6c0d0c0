"""Exception hierarchy shared across the library.

Every error the library raises on purpose derives from ``WassFilterError``,
so callers can catch one base class. ``ValidationError`` doubles as a
``ValueError`` because most of its occurrences are bad arguments.
"""


class WassFilterError(Exception):
    """Base class for all library-specific errors."""


class ValidationError(WassFilterError, ValueError):
    """An input violates a documented precondition (shape, symmetry, simplex)."""


class DegeneracyError(WassFilterError):
    """A covariance matrix has an eigenvalue below the admissible floor."""


class ConditioningError(WassFilterError):
    """A linear solve is too ill-conditioned to trust."""


class DivergenceError(WassFilterError):
    """An integration or closed-loop simulation produced non-finite or unstable results."""


class WeightUnderflowError(WassFilterError):
    """Every mixture-weight likelihood underflowed; no posterior weights exist."""


class FitError(WassFilterError):
    """Mixture fitting failed after the allowed number of recovery attempts."""


class HarnessError(WassFilterError):
    """An experiment run aborted; the message names the step and module."""
