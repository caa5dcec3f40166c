"""Exception hierarchy shared by every module.

Each class maps to one CLI exit code (see :mod:`ddn.cli`).
"""


class DDNError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class ConfigError(DDNError, ValueError):
    exit_code = 1


class ParameterError(ConfigError):
    """An argument is outside its admissible range."""


class DataError(DDNError, ValueError):
    exit_code = 2


class InputError(DataError):
    """Records or labels violate an operation's precondition."""


class FormatError(DataError):
    """A file on disk does not match its expected layout."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class SchemaError(DataError):
    """CSV header does not match the expected schema."""


class NumericError(DDNError, ArithmeticError):
    exit_code = 3


class DimensionError(DDNError, ValueError):
    exit_code = 2


class StateError(DDNError, RuntimeError):
    """Objects passed together do not belong together (e.g. a stale trace)."""

    exit_code = 3
