"""Exception hierarchy shared by every module of the toolkit."""

from __future__ import annotations


class DecapLeakError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(DecapLeakError, ValueError):
    """Invalid parameters, presets, or model configuration."""


class MisuseError(ConfigError):
    """An operation was called on an object it does not apply to."""


class InputError(DecapLeakError, ValueError):
    """Caller-supplied data does not meet an operation's preconditions."""


class ValidationError(InputError):
    """Data violates a domain invariant (non-finite sample, ragged set, ...)."""

    def __init__(self, message: str, trace_id: int | None = None, index: int | None = None):
        super().__init__(message)
        self.trace_id = trace_id
        self.index = index


class JoinError(ValidationError):
    """Trace and sidecar ids do not correspond."""


class BoundsError(InputError, IndexError):
    """Index outside the valid range (e.g. byte offset past the secret)."""


class RangeError(ValidationError):
    """A raw value outside the converter's range."""


class FormatError(DecapLeakError, ValueError):
    """Bytes do not follow a known format."""


class CorruptionError(FormatError):
    """A well-identified format whose content is damaged or truncated."""

    def __init__(self, message: str, offset: int | None = None, trace_id: int | None = None):
        super().__init__(message)
        self.offset = offset
        self.trace_id = trace_id


class BadMagicError(FormatError):
    """Frame magic not found where expected.

    ``resync_offset`` is the position of the next candidate magic in the
    buffer, or ``None`` when there is none.
    """

    def __init__(self, message: str, offset: int, resync_offset: int | None):
        super().__init__(message)
        self.offset = offset
        self.resync_offset = resync_offset


class CRCError(CorruptionError):
    """Frame checksum mismatch."""


class TraceIOError(DecapLeakError, OSError):
    """Failure of the underlying sink or source, with the byte position reached."""

    def __init__(self, message: str, position: int):
        super().__init__(message)
        self.position = position
