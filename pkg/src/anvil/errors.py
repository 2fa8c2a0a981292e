"""Exception hierarchy shared by every module.

The CLI maps the three top-level families onto exit codes:
``ConfigError`` -> 2, ``DataError`` -> 3, ``NumericError`` -> 4.
"""


class AnvilError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(AnvilError, ValueError):
    """Invalid configuration value or document."""


class DataError(AnvilError, ValueError):
    """Input data violates a precondition."""


class DomainError(DataError):
    """A value lies outside its admissible range (e.g. RSSI outside [-100, 0])."""


class MalformedScanError(DataError):
    """A raw scan cannot be aligned (duplicate AP identifiers)."""


class CapacityError(DataError):
    """Not enough samples to satisfy a request."""


class SchemaError(DataError):
    """Two datasets / a model and a dataset disagree on their AP registry or layout."""


class ShapeError(DataError):
    """Array dimensions are inconsistent."""


class DegenerateInputError(DataError):
    """A statistic is undefined for the input (e.g. zero variance)."""


class NumericError(AnvilError, ArithmeticError):
    """NaN or Inf appeared in a computation."""


class TrainingError(NumericError):
    """Training diverged."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch
