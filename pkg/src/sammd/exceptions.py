"""Exception types shared across the package."""


class SammdError(Exception):
    """Base class for all package errors."""


class InvalidInputError(SammdError):
    """Input violates a precondition (non-finite values, too few rows, bad parameters)."""


class DimensionError(SammdError):
    """Operands have incompatible shapes or feature dimensions."""


class UnequalSampleError(SammdError):
    """An operation requiring paired samples of equal size received unequal sizes."""


class NumericalError(SammdError):
    """A computation produced a non-finite intermediate or result."""


class ParseError(SammdError):
    """A data file could not be parsed; the message names the offending location."""
