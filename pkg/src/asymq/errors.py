"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Array arguments have incompatible dimensions."""


class ValidationError(ValueError):
    """An input violates a model invariant (stochasticity, discount range, ...)."""


class ConvergenceError(RuntimeError):
    """A fixed-point iteration failed to reach its tolerance or produced non-finite values."""
