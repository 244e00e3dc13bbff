"""Exception hierarchy and process exit codes."""
from enum import IntEnum

__all__ = "ExitCode", "DmtError", "ConfigError", "DataError", "NumericalError", "DomainError",


class ExitCode(IntEnum):
    OK = 0
    USAGE = 1
    DATA = 2
    NUMERICAL = 3


class DmtError(Exception):
    """Base class for all errors raised by dmt."""
    exit_code: ExitCode = ExitCode.USAGE


class ConfigError(DmtError):
    """Invalid configuration.

    Collects every offending entry so a config file can be fixed in one pass.
    """
    exit_code = ExitCode.USAGE

    def __init__(self, problems: str | list[str]):
        self.problems = [problems] if isinstance(problems, str) else list(problems)
        super().__init__("\n".join(self.problems))


class DataError(DmtError, ValueError):
    """Unreadable, malformed or mismatched data."""
    exit_code = ExitCode.DATA

    def __init__(self, message: str, *, row: int | None = None, column: int | None = None):
        self.row = row
        self.column = column

        location = []
        if row is not None:
            location.append(f"row {row}")
        if column is not None:
            location.append(f"column {column}")

        if location:
            message = f"{message} ({', '.join(location)})"

        super().__init__(message)


class NumericalError(DmtError, ArithmeticError):
    """A computation produced non-finite values."""
    exit_code = ExitCode.NUMERICAL

    def __init__(self, message: str, *, epoch: int | None = None, batch: int | None = None):
        self.epoch = epoch
        self.batch = batch

        if epoch is not None:
            message = f"{message} at epoch {epoch}" + (f", batch {batch}" if batch is not None else "")

        super().__init__(message)


class DomainError(DmtError, ValueError):
    """Argument outside a function's mathematical domain."""
    exit_code = ExitCode.NUMERICAL
