"""Exception types raised across the package."""


class InputError(ValueError):
    """Malformed input: wrong shape, non-finite entries, bad configuration."""


class SingularShiftError(ValueError):
    """A shifted eigenvalue lambda_i + shift is not strictly positive."""


class OptimizationError(RuntimeError):
    """The maximum-likelihood fit diverged (loss became NaN or infinite)."""


class DivergenceError(ArithmeticError):
    """An integral that should be finite evaluated to infinity or NaN."""


class PrecisionError(ArithmeticError):
    """A numerical procedure did not reach its requested accuracy."""
