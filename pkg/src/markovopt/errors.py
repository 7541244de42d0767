"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid parameters, shapes or configuration values."""


class PreconditionError(ValueError):
    """An operation was called on inputs violating its precondition."""


class ChainError(ConfigurationError):
    """Transition matrix is not a valid (irreducible, aperiodic) chain."""


class UnsupportedOperation(NotImplementedError):
    """The problem does not expose what the operation needs."""


class ConvergenceError(RuntimeError):
    """An inner solver exhausted its iteration budget."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class AbortedRunError(RuntimeError):
    """An optimization run produced a non-finite value and was stopped."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t
