"""Exception hierarchy shared by every spreadlab module."""

from __future__ import annotations


class SpreadLabError(Exception):
    """Base class for all library errors."""


class ValidationError(SpreadLabError, ValueError):
    """Input violates a domain invariant (crossed book, non-positive size, ...)."""


class ParseError(SpreadLabError, ValueError):
    """A record could not be parsed; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}: "
        elif where:
            where += " "
        super().__init__(f"{where}{message}")


class NoMidPriceError(SpreadLabError, ValueError):
    """Raised when a book is one-sided or empty and a mid price is required."""


class InsufficientDataError(SpreadLabError, ValueError):
    """Not enough observations / overlapping minutes to compute a result."""


class DegenerateSeriesError(SpreadLabError, ValueError):
    """Series is constant, so a regression-based statistic is undefined."""
