"""Exception hierarchy shared by every freezenet module."""


class FreezeNetError(Exception):
    """Base class for all library errors."""


class ShapeError(FreezeNetError, ValueError):
    """Operand shapes are incompatible."""


class DomainError(FreezeNetError, ValueError):
    """An argument lies outside the domain of the operation."""


class ModeError(FreezeNetError, ValueError):
    """An operation was requested for a layer in the wrong mode."""


class DegenerateTrialError(DomainError):
    """A trial cannot be normalized because it is identically zero."""


class InsufficientLengthError(ShapeError):
    """A signal is too short for the requested filter."""


class RangeError(FreezeNetError, IndexError):
    """An epoch window falls outside the recording."""


class FormatError(FreezeNetError):
    """An on-disk artifact is malformed.

    ``offset`` is the byte offset at which the problem was detected, when known.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ParseError(FreezeNetError, ValueError):
    """A text import (CSV, labels) could not be parsed."""

    def __init__(self, message, line=None, column=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.line = line
        self.column = column


class ConfigError(FreezeNetError, ValueError):
    """The experiment configuration is invalid.

    All problems found during validation are collected in ``problems``.
    """

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.problems))


class NumericalError(FreezeNetError, ArithmeticError):
    """Training produced a non-finite value."""

    def __init__(self, message, epoch=None, batch=None):
        if epoch is not None:
            message = f"{message} (epoch {epoch}, batch {batch})"
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch
