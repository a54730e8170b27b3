"""Exception types shared across the package."""


class InvalidArgumentError(ValueError):
    """Raised when an argument violates a documented precondition."""


class DegenerateInputError(ValueError):
    """Raised when an input is structurally valid but numerically unusable
    (e.g. a zero-norm embedding)."""


class OptimizationFailureError(RuntimeError):
    """Raised when an optimization run produces a non-finite loss.

    Carries the last finite iterate so callers can recover.
    """

    def __init__(self, message, last_params=None, diagnostics=None):
        super().__init__(message)
        self.last_params = last_params
        self.diagnostics = diagnostics or {}
