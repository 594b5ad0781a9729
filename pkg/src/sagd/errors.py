"""Exception types shared across the package.

Separate classes are used instead of the built-ins so that callers can
distinguish library errors from genuine ``ValueError``/``RuntimeError``
conditions raised by numpy.
"""

__all__ = [
    "ArgumentError",
    "ConsistencyError",
    "DivergenceError",
    "FitError",
]


class ArgumentError(Exception):
    """Raised when an argument is invalid (wrong shape, out of range, ...)."""


class ConsistencyError(Exception):
    """Raised when an internal invariant fails.

    Unlike :class:`ArgumentError` the inputs were valid; the computation
    itself produced something that should be impossible (for example a
    reconstructed Gram matrix with a significantly negative eigenvalue).
    """


class DivergenceError(Exception):
    """Raised when an iteration blows up.

    Parameters
    ----------
    step : int
        Index of the first step at which a non-finite or oversized value
        was detected.
    """

    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"iteration diverged at step {step}")


class FitError(Exception):
    """Raised when a rate fit has too few usable points."""
