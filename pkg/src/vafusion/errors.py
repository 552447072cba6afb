"""Exception types shared across the pipeline.

Each class maps to one CLI exit-code category (see cli.EXIT_CODES).
"""


class VaFusionError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(VaFusionError):
    """Invalid configuration value or infeasible parameter combination."""


class SchemaError(VaFusionError):
    """Input file header does not match the expected column schema."""


class RowError(VaFusionError):
    """A data row could not be parsed; carries the 1-based row number."""

    def __init__(self, row: int, message: str):
        super().__init__(f"row {row}: {message}")
        self.row = row


class EmptyCorpusError(VaFusionError):
    """Input contained no usable records."""


class DegenerateDataError(VaFusionError):
    """Data cannot support the requested operation (single class, singleton minority, ...)."""


class DivergenceError(VaFusionError):
    """Training produced a non-finite loss."""

    def __init__(self, message: str, epoch: int, step_size: float):
        super().__init__(f"{message} (epoch {epoch}, step size {step_size:g})")
        self.epoch = epoch
        self.step_size = step_size


class ShapeError(VaFusionError):
    """Array dimensions incompatible with the model or operation."""


class LeakageError(VaFusionError):
    """A cross-validation fold used information from its own test split."""
