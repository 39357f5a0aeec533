"""Exception hierarchy shared by the solver, simulator and CLI."""


class LevlimError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class DomainError(LevlimError, ValueError):
    """Input outside the admissible domain (poles, wrong branch, bad parameters)."""

    exit_code = 3


class NumericalError(LevlimError, ArithmeticError):
    """Quadrature or accumulation failure.

    ``achieved`` carries the error estimate reached before giving up, when known.
    """

    exit_code = 2

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


class ConvergenceError(LevlimError, RuntimeError):
    """Newton iteration did not reach tolerance; ``last_iterate`` holds the final point."""

    exit_code = 2

    def __init__(self, message, last_iterate=None, residual_norm=None, iterations=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual_norm = residual_norm
        self.iterations = iterations
