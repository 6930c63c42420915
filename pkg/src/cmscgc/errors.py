"""Exception hierarchy shared by all stages."""


class CmscgcError(Exception):
    """Base class. ``stage`` is filled in by the pipeline when known."""

    stage = None


class FormatError(CmscgcError):
    """Malformed container: bad manifest, size mismatch, unknown tokens."""


class DataError(CmscgcError):
    """Input data violates a value invariant (non-finite, empty, ...)."""


class ParameterError(CmscgcError, ValueError):
    """A scalar argument is out of its allowed range."""


class RangeError(ParameterError):
    """An index range does not fit the array it refers to."""


class ContractError(CmscgcError, ValueError):
    """Shapes or structural preconditions are inconsistent."""


class NumericError(CmscgcError, ArithmeticError):
    """A quantity is mathematically undefined for the given input."""


class DivergenceError(NumericError):
    """Training produced a non-finite loss."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class ConfigError(CmscgcError, ValueError):
    """Pipeline configuration is invalid."""


class PaletteError(CmscgcError, ValueError):
    """More clusters than the export palette can colour."""
