"""Exception hierarchy shared by every croplab package."""

from typing import Optional


class CropLabError(Exception):
    """Base class for all errors raised by croplab."""


class ShapeError(CropLabError, ValueError):
    """Operands have incompatible shapes."""


class NumericError(CropLabError, ArithmeticError):
    """A value or gradient became non-finite."""


class UsageError(CropLabError, ValueError):
    """An API was called in a way it does not support."""


class InvalidInputError(CropLabError, ValueError):
    """Domain input violates its documented invariants."""


class ConfigError(CropLabError, ValueError):
    """Run configuration or command-line flags are invalid."""


class TrainingDivergedError(NumericError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int, message: Optional[str] = None):
        self.epoch = epoch
        super().__init__(message or f"Training diverged (non-finite loss) at epoch {epoch}")
