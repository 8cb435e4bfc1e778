"""Exception hierarchy shared by all modules."""


class ATCircleError(Exception):
    """Base class for every error raised by this package."""


class DomainError(ATCircleError, ValueError):
    """An argument lies outside the domain of the operation."""


class DimensionError(ATCircleError, ValueError):
    """Array shapes or grids are incompatible."""


class ConfigurationError(ATCircleError, ValueError):
    """Invalid configuration, unknown tag or unbalanced data."""


class SolverError(ATCircleError, RuntimeError):
    """An iterative linear solver did not converge."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class StepError(ATCircleError, RuntimeError):
    """A descent step could not produce an admissible iterate."""


class SizeError(ATCircleError, ValueError):
    """A search space exceeds the enumeration bound."""


class ConsistencyError(ATCircleError, ValueError):
    """Fields that should lift a common map do not."""


class LayerCollisionError(ATCircleError, ValueError):
    """Transition layers of distinct jump components overlap."""


class DegeneratePlaquetteError(ATCircleError, ValueError):
    """An edge difference equals +-pi so the winding is undefined."""
