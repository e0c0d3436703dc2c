"""Exception types raised by the package."""


class ChoquardError(Exception):
    """Base class for all package errors."""


class DomainError(ChoquardError, ValueError):
    """Input outside the admissible parameter domain."""


class QuadratureError(ChoquardError, ArithmeticError):
    """An integral failed to reach its requested tolerance."""


class EmptyGridError(ChoquardError, ValueError):
    """No lattice node lies strictly inside the domain."""


class GridMismatchError(ChoquardError, ValueError):
    """Two fields live on different grids."""


class SolverError(ChoquardError, ArithmeticError):
    """Iterative solve stopped before reaching the requested residual."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class SingularityError(ChoquardError, ValueError):
    """Evaluation at the pole of a singular kernel."""


class NormalizationError(ChoquardError, ValueError):
    """Requested residual normalization does not match the bubble scaling."""


class ZeroFieldError(ChoquardError, ValueError):
    """Operation undefined for the zero field."""
