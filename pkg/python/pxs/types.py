"""
Type definitions, enums, and exceptions for the PXS library.
"""
from __future__ import annotations

import logging
from enum import IntEnum
from typing import Optional


class ShapeKind(IntEnum):
    """
    Kind of geometric primitive carried by a proxy.

    The integer values are part of the archive format.
    """
    PLANE = 0
    CYLINDER = 1
    SPHERE = 2


class ProxyStatus(IntEnum):
    """
    Lifecycle state of a proxy.

    Attributes:
        ACTIVE: Supported by recent frames
        PROBATION: Unsupported, pending re-confirmation or purge
    """
    ACTIVE = 0
    PROBATION = 1


class LogLevel(IntEnum):
    """
    Log level for controlling PXS output.

    Higher values include all lower levels. For example, INFO
    will log INFO, WARN, and ERROR messages.

    Attributes:
        NONE: Disable all logging
        ERROR: Error conditions only
        WARN: Warnings and errors
        INFO: Informational messages, warnings, and errors
        DEBUG: All messages including per-frame stage timings
    """
    NONE = 0
    ERROR = 1
    WARN = 2
    INFO = 3
    DEBUG = 4

    def to_logging(self) -> int:
        """Map to the equivalent :mod:`logging` level."""
        return _LOGGING_LEVELS[self]

    @classmethod
    def from_logging(cls, level: int) -> "LogLevel":
        """Map a :mod:`logging` level back to the closest LogLevel."""
        if level > logging.CRITICAL:
            return cls.NONE
        if level >= logging.ERROR:
            return cls.ERROR
        if level >= logging.WARNING:
            return cls.WARN
        if level >= logging.INFO:
            return cls.INFO
        return cls.DEBUG


_LOGGING_LEVELS = {
    LogLevel.NONE: logging.CRITICAL + 10,
    LogLevel.ERROR: logging.ERROR,
    LogLevel.WARN: logging.WARNING,
    LogLevel.INFO: logging.INFO,
    LogLevel.DEBUG: logging.DEBUG,
}


class ErrorCode(IntEnum):
    """
    PXS error codes.

    Codes are stable and reported by the command line tool.
    """
    OK = 0

    # Argument / math errors
    VALIDATION = 1
    DOMAIN = 2

    # Archive errors
    DECODE = 3
    UNSUPPORTED_VERSION = 4

    # Metric errors
    UNDEFINED_METRIC = 5

    # Input errors
    DATASET = 6
    CONFIG = 7

    # Output errors
    IO = 8


_DEFAULT_MESSAGES = {
    ErrorCode.OK: "success",
    ErrorCode.VALIDATION: "invalid argument",
    ErrorCode.DOMAIN: "value outside the function domain",
    ErrorCode.DECODE: "corrupt or truncated archive",
    ErrorCode.UNSUPPORTED_VERSION: "unsupported archive version",
    ErrorCode.UNDEFINED_METRIC: "metric is undefined for these inputs",
    ErrorCode.DATASET: "malformed dataset",
    ErrorCode.CONFIG: "invalid configuration",
    ErrorCode.IO: "I/O error",
}


# ============== Exceptions ==============


class PxsError(Exception):
    """
    Base exception for all PXS errors.

    Attributes:
        code: The error code
        message: Human-readable error message
    """

    def __init__(self, code: int, message: Optional[str] = None):
        self.code = ErrorCode(code) if code in ErrorCode._value2member_map_ else code
        if message is None:
            message = _DEFAULT_MESSAGES.get(self.code, f"PXS error code {code}")
        self.message = message
        super().__init__(f"{self.message} (code={self.code})")

    @classmethod
    def from_code(cls, code: int, message: Optional[str] = None) -> "PxsError":
        """
        Create the appropriate exception subclass for an error code.

        Args:
            code: Error code
            message: Optional message overriding the default one

        Returns:
            Appropriate PxsError subclass instance
        """
        error_map = {
            ErrorCode.VALIDATION: PxsValidationError,
            ErrorCode.DOMAIN: PxsDomainError,
            ErrorCode.UNDEFINED_METRIC: PxsMetricError,
            ErrorCode.DATASET: PxsDatasetError,
            ErrorCode.CONFIG: PxsConfigError,
            ErrorCode.IO: PxsIOError,
        }
        if code == ErrorCode.DECODE:
            return PxsDecodeError(0, message)
        if code == ErrorCode.UNSUPPORTED_VERSION:
            return PxsVersionError(-1, message)
        exception_class = error_map.get(code)
        if exception_class is None:
            return cls(code, message)
        return exception_class(message or _DEFAULT_MESSAGES[ErrorCode(code)])


class PxsValidationError(PxsError):
    """Raised when an argument or constructed value violates its invariants."""

    def __init__(self, message: str):
        super().__init__(ErrorCode.VALIDATION, message)


class PxsDomainError(PxsError):
    """Raised when a math operation is evaluated outside its domain."""

    def __init__(self, message: str):
        super().__init__(ErrorCode.DOMAIN, message)


class PxsDecodeError(PxsError):
    """
    Raised on corrupt or truncated archives.

    Attributes:
        offset: Byte offset at which decoding failed
    """

    def __init__(self, offset: int, message: Optional[str] = None):
        self.offset = offset
        detail = message or _DEFAULT_MESSAGES[ErrorCode.DECODE]
        super().__init__(ErrorCode.DECODE, f"{detail} at byte offset {offset}")


class PxsVersionError(PxsError):
    """Raised when an archive declares a format version this build cannot read."""

    def __init__(self, version: int, message: Optional[str] = None):
        self.version = version
        super().__init__(
            ErrorCode.UNSUPPORTED_VERSION,
            message or f"unsupported archive version {version}",
        )


class PxsMetricError(PxsError):
    """Raised when a quality metric is undefined (e.g. no overlapping valid pixels)."""

    def __init__(self, message: str):
        super().__init__(ErrorCode.UNDEFINED_METRIC, message)


class PxsDatasetError(PxsError):
    """Raised when a dataset directory is malformed. The message names the file."""

    def __init__(self, message: str):
        super().__init__(ErrorCode.DATASET, message)


class PxsConfigError(PxsError):
    """Raised when a config or scene file is invalid."""

    def __init__(self, message: str):
        super().__init__(ErrorCode.CONFIG, message)


class PxsIOError(PxsError):
    """Raised when an output cannot be written."""

    def __init__(self, message: str):
        super().__init__(ErrorCode.IO, message)
