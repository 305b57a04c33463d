"""Exception hierarchy shared by every module of the package."""

from __future__ import annotations


class PushSumError(Exception):
    """Base class for all errors raised by this package."""


class InvalidTopologyError(PushSumError, ValueError):
    pass


class ShapeError(PushSumError, ValueError):
    pass


class DebiasDomainError(PushSumError, ValueError):
    """Raised when de-biasing is attempted with a non-positive push-sum weight.

    In a correct run this only happens for virtual (in-transit) nodes, so seeing
    it on a real node means the protocol lost mass somewhere.
    """


class DelayBoundError(PushSumError, ValueError):
    pass


class ProtocolError(PushSumError, RuntimeError):
    pass


class InvalidBaselineError(PushSumError, ValueError):
    pass


class EmptyDatasetError(PushSumError, ValueError):
    pass


class FitWindowError(PushSumError, ValueError):
    pass


class ConfigError(PushSumError, ValueError):
    """Invalid run configuration; ``line`` points into the source file when known."""

    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        self.message = message
        self.line = line
        self.source = source
        super().__init__(str(self))

    def __str__(self) -> str:
        where = self.source or "<config>"
        if self.line is not None:
            return f"{where}:{self.line}: {self.message}"
        return f"{where}: {self.message}"
