"""Exception types shared across the package."""


class GisrError(Exception):
    """Base class so callers can catch everything from this package."""


class ShapeError(GisrError, ValueError):
    """Tensor dimensions are inconsistent with the requested operation."""


class ArgumentError(GisrError, ValueError):
    """An argument violates a precondition (bad size, stride, key, ...)."""


class NumericError(GisrError, ArithmeticError):
    """A computation produced non-finite values or diverged."""


class FormatError(GisrError, ValueError):
    """A serialized file is corrupt, truncated, or of an unknown version."""
