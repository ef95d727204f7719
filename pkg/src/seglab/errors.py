"""Exception types shared across the package."""


class SegLabError(Exception):
    """Base class for all seglab-specific errors."""


class ShapeMismatchError(SegLabError, ValueError):
    """Operands live on different grids or class sets."""


class ValidationError(SegLabError, ValueError):
    """A value violates a constructor or argument contract."""


class ConfigError(SegLabError, ValueError):
    """An experiment configuration is inconsistent or names an unknown option."""


class TrainingAbortError(SegLabError, RuntimeError):
    """Training hit a non-finite loss or gradient."""


class OracleError(SegLabError, RuntimeError):
    """The finite-difference oracle could not evaluate the loss."""


class StaleCacheError(SegLabError, RuntimeError):
    """A backward pass received a cache that does not match the forward pass."""


class UndefinedRangeError(SegLabError, ValueError):
    """Dynamic range is undefined because the gradient map has no nonzero entry."""
