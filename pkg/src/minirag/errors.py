"""Exception hierarchy. The CLI maps these onto exit codes."""

from __future__ import annotations


class MiniRAGError(Exception):
    """Base class for all package errors."""


class NotFoundError(MiniRAGError, KeyError):
    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class IntegrityError(MiniRAGError):
    """A graph violates referential integrity or a structural invariant."""


class FormatError(MiniRAGError):
    """A persisted file is malformed, truncated or has the wrong schema version."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)


class DimensionMismatchError(MiniRAGError, ValueError):
    pass


class TransportError(MiniRAGError):
    """A model endpoint could not be reached or kept failing. Retryable."""

    def __init__(self, message: str, status: int | None = None):
        self.status = status
        super().__init__(message)


class ProtocolError(MiniRAGError):
    """A model endpoint answered with something that is not the expected JSON."""


class ReplayMissError(MiniRAGError):
    """The replay transcript has no response for a request fingerprint."""

    def __init__(self, fingerprint: str, label: str = ""):
        self.fingerprint = fingerprint
        msg = f"no transcript entry for request fingerprint {fingerprint}"
        if label:
            msg += f" ({label})"
        super().__init__(msg)
