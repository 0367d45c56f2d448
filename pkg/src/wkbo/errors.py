"""Exception types raised across the package."""

import numpy as np


class InvalidInputError(ValueError):
    """Malformed input points, mismatched lengths or dimensions."""


class InvalidParameterError(ValueError):
    """A numeric parameter lies outside its admissible range."""


class InvalidObservationError(ValueError):
    """An observation carries a non-finite label or an out-of-domain input."""


class UnsupportedKernelError(TypeError):
    """The requested operation needs a different kernel family."""


class ConditioningError(np.linalg.LinAlgError):
    """A matrix that must be positive definite failed to factorize.

    Attributes
    ----------
    index : int
        Zero-based row at which the Cholesky recursion broke down.
    pivot : float
        Value of the offending (non-positive) pivot.
    """

    def __init__(self, message, index=-1, pivot=float("nan")):
        super().__init__(message)
        self.index = index
        self.pivot = pivot


class ConfigError(ValueError):
    """Invalid or incomplete experiment configuration.

    Attributes
    ----------
    field : str or None
        Name of the offending config key, if attributable to one.
    """

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class SchemaError(ValueError):
    """A persisted result file does not match the expected layout."""
