"""Exception hierarchy shared by every module in the package."""


class OtmpsiError(Exception):
    """Base class for all package errors."""


class ZeroInverse(OtmpsiError, ZeroDivisionError):
    """Raised when inverting the zero field element."""


class DuplicatePoint(OtmpsiError, ValueError):
    """Raised when interpolation points repeat or include zero."""


class LengthMismatch(OtmpsiError, ValueError):
    """Raised when share and basis lengths disagree."""


class NonCanonical(OtmpsiError, ValueError):
    """Raised when a decoded field element is not below q."""


class SetTooLarge(OtmpsiError, ValueError):
    """Raised when a participant's set exceeds the session maximum M."""


class GeometryMismatch(OtmpsiError, ValueError):
    """Raised when share tables disagree on (T, B)."""


class InvalidEncoding(OtmpsiError, ValueError):
    """Raised for malformed group element encodings."""


class ParameterError(OtmpsiError, ValueError):
    """Raised for inconsistent session parameters."""


class ProtocolError(OtmpsiError):
    """Raised when a peer sends an unexpected or malformed message."""


class SessionTimeout(OtmpsiError, TimeoutError):
    """Raised when a peer does not answer within the session deadline."""


class ConfigError(OtmpsiError, ValueError):
    """Raised for missing or malformed configuration values."""
