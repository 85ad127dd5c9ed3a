"""Error types raised across shiftlab.

Every error derives from ShiftLabError so entry points can catch one type,
log it and exit with status 1.
"""

from __future__ import annotations

from typing import Optional


class ShiftLabError(Exception):
    """Base class for all shiftlab errors."""


class ParameterError(ShiftLabError, ValueError):
    """A parameter is outside its admissible range."""


class DimensionError(ParameterError):
    """A truncation is too small for the requested construction."""


class PreconditionError(ParameterError):
    """An input violates a documented precondition."""


class ConvergenceError(ParameterError):
    """A product or series that must converge does not."""


class PrecisionError(ShiftLabError, ArithmeticError):
    """The requested precision cannot be reached within the configured limits."""


class TruncationError(ShiftLabError):
    """A truncated model cannot deliver trusted values."""


class QuadratureError(ShiftLabError):
    """A quadrature rule cannot integrate the requested product."""


class EvaluationRangeError(ShiftLabError, OverflowError):
    """A pointwise evaluation would leave the representable range."""


class ConfigurationError(ShiftLabError):
    """An unknown name was requested from a registry."""


class BundleError(ShiftLabError):
    """Certificates cannot be merged into one report."""


class ScenarioError(ShiftLabError):
    """A scenario file is malformed."""

    def __init__(self, message: str, field: Optional[str] = None,
                 line: Optional[int] = None, column: Optional[int] = None):
        self.field = field
        self.line = line
        self.column = column
        location = []
        if line is not None:
            location.append(f"line {line}")
            if column is not None:
                location.append(f"column {column}")
        if field:
            location.append(f"field '{field}'")
        prefix = f"{', '.join(location)}: " if location else ""
        super().__init__(f"{prefix}{message}")
