"""Exception types raised across the package."""


class DimensionError(ValueError):
    """A state, output or matrix has the wrong shape."""


class DivergenceError(ArithmeticError):
    """A trajectory left the finite range.

    ``step`` is the index of the first offending state.
    """

    def __init__(self, message, step):
        super().__init__(message)
        self.step = step


class DegenerateCocycleError(ArithmeticError):
    """A Jacobian product lost rank (zero pivot or zero determinant)."""

    def __init__(self, message, step):
        super().__init__(message)
        self.step = step


class NotConvergedError(ValueError):
    """A Lyapunov spectrum was used before its estimate settled."""
