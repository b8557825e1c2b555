"""Exception types shared by the library and the command-line tool.

The CLI maps ConfigError and ScheduleError to exit code 2 and any
NumericalError to exit code 3.
"""

from __future__ import annotations

from typing import Optional


class RisTrackError(Exception):
    """Base class for every error raised by ris_track."""


class ConfigError(RisTrackError):
    """Invalid configuration value or unreadable configuration file."""

    def __init__(self, message: str, *, field: Optional[str] = None, line: Optional[int] = None,
                 column: Optional[int] = None) -> None:
        super().__init__(message)
        self.message = message
        self.field = field
        self.line = line
        self.column = column

    def __str__(self) -> str:
        where = []
        if self.field:
            where.append(f"field {self.field}")
        if self.line is not None:
            loc = f"line {self.line}"
            if self.column is not None:
                loc += f", column {self.column}"
            where.append(loc)
        if not where:
            return self.message
        return f"{self.message} ({'; '.join(where)})"


class ScheduleError(RisTrackError, ValueError):
    """Phase schedule cannot serve the requested setup."""


class NumericalError(RisTrackError):
    """A computation hit a point where it is undefined or unstable."""


class DegenerateGeometryError(NumericalError, ValueError):
    """A RIS position coincides with an anchor."""

    def __init__(self, message: str = "degenerate geometry") -> None:
        super().__init__(message)


class NondifferentiableError(NumericalError, ValueError):
    """Gradient requested on a kink of an absolute-value term."""

    def __init__(self, message: str = "nondifferentiable point") -> None:
        super().__init__(message)


class EstimationError(NumericalError):
    """Measurement or position estimation failed on the given data."""


class SingularMatrixError(NumericalError):
    """A matrix that must be inverted is singular or not positive definite."""
