from __future__ import annotations


class PhotonCorrelationError(Exception):
    """Base exception for all photon-correlation toolkit errors."""


class ConfigError(PhotonCorrelationError):
    """Raised when an experiment configuration is invalid or missing."""


class InvalidArgumentError(PhotonCorrelationError, ValueError):
    """Raised when an operation's precondition is violated."""


class UndefinedStatisticError(PhotonCorrelationError):
    """Raised when an anti-correlation statistic cannot be formed from the counts."""


class TagFileError(PhotonCorrelationError):
    """Base class for PTAG time-tag file errors."""


class TagFormatError(TagFileError):
    """Raised when a PTAG header or record holds an invalid value."""


class TagTruncationError(TagFileError):
    """Raised when a PTAG file ends before its declared content."""

    def __init__(self, offset: int, message: str | None = None):
        self.offset = offset
        super().__init__(message or f"File truncated at byte offset {offset}.")


class TagOrderError(TagFileError):
    """Raised when PTAG records are not in (time, channel) order."""

    def __init__(self, record_index: int, message: str | None = None):
        self.record_index = record_index
        super().__init__(
            message
            or f"Record {record_index} is out of order (time, channel)."
        )


class TagWriteError(TagFileError):
    """Raised when writing a PTAG file to its sink fails."""

    def __init__(self, bytes_written: int, cause: Exception):
        self.bytes_written = bytes_written
        super().__init__(
            f"Write failed after {bytes_written} bytes: {cause}"
        )
