"""Exception hierarchy shared by all modules."""


class DisentangleError(Exception):
    """Base class for every error raised by the package."""


class ParameterError(DisentangleError, ValueError):
    """An argument is outside its allowed range."""


class ValidationError(DisentangleError, ValueError):
    """An object fails a numerical invariant (unitarity, hermiticity, ...)."""


class UsageError(DisentangleError):
    """An operation was requested in a context where it is not defined."""


class NumericError(DisentangleError, ArithmeticError):
    """A linear-algebra routine failed or produced non-finite values."""


class IntegrationError(DisentangleError):
    """The integrator produced an invalid state or breached a monitor.

    Attributes
    ----------
    time : float
        Simulation time at which the problem was detected.
    """

    def __init__(self, message, time=float("nan")):
        super().__init__(message)
        self.time = time


class ConfigError(DisentangleError, ValueError):
    """A configuration document does not match the schema."""
