"""Exception hierarchy shared by all modules."""


class InterlacementError(Exception):
    """Base class for errors raised by this package."""


class DimensionError(InterlacementError, ValueError):
    """The lattice dimension is outside the supported range."""


class PreconditionError(InterlacementError, ValueError):
    """An input violates a documented precondition (domain, geometry, guards)."""


class NumericalError(InterlacementError, ArithmeticError):
    """A numerical routine did not reach its target accuracy.

    Attributes
    ----------
    estimate : float or None
        Achieved error estimate, when one is available.
    """

    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate
