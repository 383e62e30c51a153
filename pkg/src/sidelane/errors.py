"""Exception types shared across the toolkit."""


class SidelaneError(Exception):
    """Base class for all toolkit-specific errors."""


class ParseError(SidelaneError):
    """Malformed text input (label files, list files)."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DegenerateGeometryError(SidelaneError, ValueError):
    """Point configuration or matrix unusable for projective math."""


class PointAtInfinityError(SidelaneError, ValueError):
    """Projective transform sent a point to (or near) the plane at infinity."""


class ConflictError(SidelaneError):
    """Refusing to overwrite an existing output without overwrite enabled."""


class BackendError(SidelaneError):
    """External inpainting process failed or produced unusable output."""


class ConfigError(SidelaneError):
    """Pipeline configuration is invalid or references missing files."""


class LockError(SidelaneError):
    """Another process holds the lock on this output tree."""
