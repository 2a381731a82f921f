"""Exception hierarchy shared by every module of the package."""


class RoughViabError(Exception):
    """Base class for all errors raised by roughviab."""


class ContractError(RoughViabError, ValueError):
    """An argument violates an operation's precondition (shape, level, range)."""


class NumericError(RoughViabError, ArithmeticError):
    """A numerical routine could not produce a trustworthy result."""


class ExplosionError(NumericError):
    """A trajectory became non-finite or left the configured norm bound."""

    def __init__(self, message, step=None, time=None):
        super().__init__(message)
        self.step = step
        self.time = time


class ConvergenceError(NumericError):
    """An iterative projection did not reach its residual target."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual
