"""Exception hierarchy. Each class carries the CLI exit code for its kind."""

from __future__ import annotations


class SttError(Exception):
    exit_code = 1


class UsageError(SttError):
    exit_code = 2


class FormatError(SttError, ValueError):
    exit_code = 3


class ConfigError(SttError, ValueError):
    exit_code = 4


class IdentityError(SttError, ValueError):
    exit_code = 5


class SchemaError(SttError, ValueError):
    exit_code = 6


class NotFoundError(SttError, KeyError):
    exit_code = 7

    def __str__(self) -> str:
        return Exception.__str__(self)


class ArgumentError(SttError, ValueError):
    exit_code = 8


class UndefinedInputError(SttError, ValueError):
    """A metric is mathematically undefined for the given input."""

    exit_code = 9


class UndefinedCorrelationError(UndefinedInputError):
    pass


class UndefinedScoreError(UndefinedInputError):
    pass


class InsufficientDataError(SttError, ValueError):
    exit_code = 10


class SequencingError(SttError, ValueError):
    exit_code = 11


# I/O failures surface as OSError; the CLI maps them to this code.
IO_EXIT_CODE = 12
# Run completed but some stage recorded error-level diagnostics.
DIAGNOSED_EXIT_CODE = 13
