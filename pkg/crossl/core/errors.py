"""Exception hierarchy shared by the library and the CLI.

Every error carries the process exit code the CLI reports for it.
"""

from typing import Optional


class CrosslError(Exception):
    """Base class for all crossl errors."""

    exit_code: int = 1


class ConfigError(CrosslError, ValueError):
    """Invalid configuration, flag combination or argument value."""

    exit_code = 2


class ScenarioError(ConfigError):
    """Missing-modality scenario that cannot be realized."""


class LabelError(ConfigError):
    """Label outside [0, num_classes) or labels required but absent."""


class ShapeError(CrosslError, ValueError):
    """Tensor shapes do not agree for the requested operation."""

    exit_code = 2


class InvalidWindowError(ShapeError):
    """Time axis shorter than the convolution kernel."""


class EmptyAxisError(ShapeError):
    """Reduction over an axis of length zero."""


class BatchTooSmallError(ShapeError):
    """Batch statistics requested on fewer than two samples."""


class EmptyTapeError(CrosslError, RuntimeError):
    """backward() called on a tensor that no recorded operation produced."""


class FormatError(CrosslError):
    """Binary file (checkpoint or payload) is malformed."""

    exit_code = 3

    def __init__(self, message: str, offset: Optional[int] = None):
        """
        Initialize the error.

        Args:
            message: Human-readable description
            offset: Byte offset at which parsing failed
        """
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


class ChecksumError(FormatError):
    """CRC32 trailer does not match the file contents."""


class DatasetError(CrosslError):
    """Dataset manifest or payloads are missing or inconsistent."""

    exit_code = 3

    def __init__(self, message: str, field: Optional[str] = None):
        """
        Initialize the error.

        Args:
            message: Human-readable description
            field: Name of the offending manifest field
        """
        self.field = field
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)


class DivergenceError(CrosslError, ArithmeticError):
    """Loss became NaN or infinite during training."""

    exit_code = 4

    def __init__(self, epoch: int, batch: int, value: float):
        self.epoch = epoch
        self.batch = batch
        self.value = value
        super().__init__(f"non-finite loss {value!r} at epoch {epoch}, batch {batch}")

    def __reduce__(self):
        # rebuilt from its fields when sent back from a worker process
        return type(self), (self.epoch, self.batch, self.value)
