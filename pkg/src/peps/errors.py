"""Exception hierarchy shared by every module."""


class PepsError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(PepsError, ValueError):
    """Inconsistent shapes, dimensions or configuration values."""


class InputError(PepsError, ValueError):
    """Invalid argument values (NaN coordinates, empty vectors, bad shapes)."""


class RangeError(InputError):
    """An index or step lies outside its admissible range."""


class ContractError(PepsError):
    """A documented precondition of an operation was violated."""


class NumericFaultError(PepsError, ArithmeticError):
    """A NaN or infinity appeared during a computation."""

    def __init__(self, message, op=None, diagnostics=None):
        super().__init__(message)
        self.op = op
        self.diagnostics = diagnostics or {}


class FormatError(PepsError, ValueError):
    """A file could not be decoded."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class UnsupportedVersionError(FormatError):
    pass
