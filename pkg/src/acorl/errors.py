"""Exception hierarchy shared by every module.

The CLI maps each family onto a fixed exit code, so raise the most specific
class that applies.
"""


class AcorlError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class ConfigurationError(AcorlError):
    exit_code = 2


class DataError(AcorlError):
    exit_code = 3


class IntegrityError(DataError):
    """A serialized artifact is corrupt, truncated or inconsistent."""


class ParseError(DataError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ContractViolation(AcorlError, ValueError):
    """A caller broke a documented precondition (shape, range, ...)."""

    exit_code = 4


class DomainError(ContractViolation):
    """Input lies outside the mathematical domain of an operation."""
