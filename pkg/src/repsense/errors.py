"""Exception hierarchy shared by every repsense module."""

from __future__ import annotations


class RepsenseError(Exception):
    """Base class for all errors raised by this package."""


class SensorFileError(RepsenseError, ValueError):
    """A per-sensor text file could not be turned into a recording."""


class EmptyInputError(SensorFileError):
    pass


class ParseError(SensorFileError):
    def __init__(self, line_number: int, message: str) -> None:
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class OrderingError(SensorFileError):
    def __init__(self, line_number: int, message: str) -> None:
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class AlignmentError(RepsenseError, ValueError):
    """Recordings cannot be placed on a shared time base."""


class FilterSpecError(RepsenseError, ValueError):
    pass


class SignalTooShortError(RepsenseError, ValueError):
    pass


class DegenerateSignalError(RepsenseError, ValueError):
    """Zero-variance input where a normalized statistic is required."""


class NoPeriodError(RepsenseError):
    """No autocorrelation peak qualifies as a repetition period."""


class NoActivityError(RepsenseError):
    """No channel of a session shows periodic activity."""


class LayoutMismatchError(RepsenseError, ValueError):
    """Feature vectors or models disagree on their feature layout."""


class TrainingError(RepsenseError, ValueError):
    pass


class ConfigError(RepsenseError, ValueError):
    """A sensor configuration asks for channels that are not present."""


class SplitError(RepsenseError, ValueError):
    """Too few examples per class for the requested split or fold count."""
