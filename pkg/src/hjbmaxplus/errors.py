"""Exception hierarchy shared by all solver modules."""


class HJBMaxPlusError(Exception):
    """Base class for every error raised by this package."""


class UsageError(HJBMaxPlusError, ValueError):
    """Caller passed arguments that violate an operation's preconditions."""


class ParseError(UsageError):
    """An input file could not be parsed; the message names the location."""


class DomainError(HJBMaxPlusError, ValueError):
    """A matrix or value lies outside the domain of an operation."""


class NumericalFailure(HJBMaxPlusError, ArithmeticError):
    """A numerical kernel failed to converge.

    The offending input is kept on ``matrix`` for post-mortem inspection.
    """

    def __init__(self, message, matrix=None):
        super().__init__(message)
        self.matrix = matrix


class DegenerateInstanceError(HJBMaxPlusError, ValueError):
    """The instance has no disturbance channel (all sigma are zero)."""


class AssumptionError(HJBMaxPlusError, ValueError):
    """A hard structural assumption failed, e.g. a non positive definite D."""

    def __init__(self, message, mode=None):
        super().__init__(message)
        self.mode = mode


class FiniteEscapeError(HJBMaxPlusError, ArithmeticError):
    """A Riccati solution blew up before the requested horizon.

    Attributes
    ----------
    last_finite : ndarray or None
        Last iterate with finite entries.
    step_index : int or None
        Index of the integration step at which the blow-up was detected.
    escape_time : float or None
        Estimate of the escape time.
    word : tuple or None
        Switching word of the offending quadratic, when known.
    """

    def __init__(self, message, last_finite=None, step_index=None,
                 escape_time=None, word=None):
        super().__init__(message)
        self.last_finite = last_finite
        self.step_index = step_index
        self.escape_time = escape_time
        self.word = word


class BasisLimitError(HJBMaxPlusError, MemoryError):
    """The number of quadratic forms exceeded the configured cap."""


class SamplingError(HJBMaxPlusError, RuntimeError):
    """Random sampling produced no usable sample."""
