"""Exception hierarchy shared by every module."""

from __future__ import annotations

from typing import Optional


class FedDistillError(Exception):
    """Base class for all simulator errors."""


class InputError(FedDistillError, ValueError):
    """A caller passed data that violates an operation's precondition."""


class ConfigError(FedDistillError, ValueError):
    """An experiment configuration is malformed or inconsistent."""

    def __init__(self, key: str, message: str) -> None:
        """Attach the offending dotted key path to the message."""
        super().__init__(f"{key}: {message}")
        self.key = key


class FormatError(FedDistillError, ValueError):
    """A binary dataset file does not match its expected layout."""

    def __init__(self, path: str, offset: int, message: str) -> None:
        """Attach the file path and byte offset to the message."""
        super().__init__(f"{path} @ byte {offset}: {message}")
        self.path = path
        self.offset = offset


class NumericError(FedDistillError, ArithmeticError):
    """Training diverged (non-finite loss or parameters)."""

    def __init__(self, message: str, epoch: Optional[int] = None) -> None:
        """Record the epoch at which divergence was detected."""
        prefix = f"epoch {epoch}: " if epoch is not None else ""
        super().__init__(prefix + message)
        self.epoch = epoch


class InternalError(FedDistillError, RuntimeError):
    """An internal contract between two operations was violated."""


class StageError(FedDistillError):
    """A pipeline stage failed; wraps the original error with its stage tag."""

    def __init__(self, stage: str, cause: BaseException) -> None:
        """Prefix the cause's message with the stage tag."""
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause
