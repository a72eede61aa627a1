"""Exception types raised across the package."""

from __future__ import annotations


class MerlionError(Exception):
    """Base class for all package errors."""


class DegenerateEmbeddingError(MerlionError, ValueError):
    def __init__(self, detail: str = "") -> None:
        msg = "degenerate embedding"
        if detail:
            msg = f"{msg}: {detail}"
        super().__init__(msg)


class DimensionMismatchError(MerlionError, ValueError):
    pass


class ConfigError(MerlionError, ValueError):
    pass


class SamplerStateError(MerlionError, ValueError):
    """Raised when a sampler operation is called on a state that does not support it."""


class StreamFormatError(MerlionError, ValueError):
    """A malformed on-disk record. ``offset`` is the byte offset (or line number) of the fault."""

    def __init__(self, message: str, *, path: str | None = None, offset: int | None = None, unit: str = "byte offset") -> None:
        self.path = path
        self.offset = offset
        where = []
        if path is not None:
            where.append(str(path))
        if offset is not None:
            where.append(f"{unit} {offset}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class EnhancerError(MerlionError, RuntimeError):
    pass
