"""Exception types shared across the package."""


class WassdlError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(WassdlError, ValueError):
    """Tensor shapes or mode indices do not line up."""


class NumericError(WassdlError, ArithmeticError):
    """Non-finite input or unrecoverable overflow."""


class ParameterError(WassdlError, ValueError):
    """A scalar parameter is outside its admissible range."""


class CapacityError(WassdlError, MemoryError):
    """A requested object is too large to materialize."""


class PreconditionError(WassdlError, ValueError):
    """An input violates a documented precondition."""


class ConvergenceError(WassdlError, RuntimeError):
    """An iterative solver exhausted its budget.

    Attributes
    ----------
    residual : float
        The last measured residual (marginal violation or gradient norm).
    iterations : int
        Number of iterations performed.
    """

    def __init__(self, message, residual=float("nan"), iterations=0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class StepError(WassdlError, RuntimeError):
    """A block subproblem solver failed inside a BCD step."""

    def __init__(self, message, block):
        super().__init__(message)
        self.block = block
