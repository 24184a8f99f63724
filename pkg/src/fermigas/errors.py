class NumericDomainError(ArithmeticError):
    """An input left the domain where a matrix function is defined."""


class ConvergenceError(RuntimeError):
    """An iterative or adaptive scheme failed to reach its tolerance."""

    def __init__(self, message, *, shift=None, residual=None):
        super().__init__(message)
        self.shift = shift
        self.residual = residual


class ResourceLimitError(RuntimeError):
    """A computation would exceed a configured size limit."""


class InvariantViolation(AssertionError):
    """A computed quantity broke a property that must hold by construction."""
