"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ``ConfigError`` -> 2,
``NumericalError`` -> 3, ``CheckpointError`` / ``OSError`` -> 4.
"""

from __future__ import annotations


class PourError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(PourError, ValueError):
    """Invalid configuration or precondition violation on user input."""


class DimensionError(ConfigError):
    """Shapes or dimensions that cannot be composed."""


class NumericalError(PourError, ArithmeticError):
    """Base class for failures of the numerics themselves."""


class ZeroDirectionError(NumericalError):
    """A projection direction has (numerically) zero norm."""


class DegenerateFrameError(NumericalError):
    """Projection would collapse the retained frame to the origin."""


class DegenerateInputError(NumericalError):
    """Input has no variance where some is required (e.g. constant features in CKA)."""


class EmptyClassError(PourError, ValueError):
    """A class has no rows where at least one is required."""


class InsufficientDataError(PourError, ValueError):
    """Not enough samples for the requested split."""


class NonFiniteLossError(NumericalError):
    """Training produced a NaN or infinite loss."""

    def __init__(self, step: int, loss: float):
        super().__init__(f"non-finite loss {loss!r} at step {step}")
        self.step = step
        self.loss = loss


class CheckpointError(PourError, OSError):
    """Malformed checkpoint container."""


class ChecksumError(CheckpointError):
    pass


class ShapeMismatchError(CheckpointError):
    pass


class ProtocolViolation(PourError, RuntimeError):
    """The unlearning stage tried to reach retained-set data."""


class StageError(PourError):
    """Wraps an error raised inside one pipeline stage, tagging the stage name."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause
