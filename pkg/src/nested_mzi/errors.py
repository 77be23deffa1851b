"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class MziError(Exception):
    """Base class for every error raised by this package."""


class ItfError(MziError, ValueError):
    """Problem with an interferometer description.

    ``line`` and ``column`` are 1-based when known.
    """

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        if line is not None:
            where = f"line {line}" + (f", column {column}" if column is not None else "")
            message = f"{where}: {message}"
        super().__init__(message)


class ItfSyntaxError(ItfError):
    pass


class DuplicateName(ItfError):
    pass


class UnknownName(ItfError):
    """Reference to an undeclared node, channel, or port."""


class DanglingPort(ItfError):
    def __init__(self, port: str, line: int | None = None):
        self.port = port
        super().__init__(f"port {port} is not connected", line)


class PortConflict(ItfError):
    """A port is used by more than one channel."""

    def __init__(self, port: str, line: int | None = None):
        self.port = port
        super().__init__(f"port {port} is connected more than once", line)


class NotADag(ItfError):
    pass


class NoSource(ItfError):
    pass


class InvalidParameter(ItfError):
    pass


class UnknownProbe(MziError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "unknown probe"


class UnknownChannel(MziError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "unknown channel"


class ChannelNotOccupiedAtSlot(MziError, ValueError):
    pass


class TargetNotOccupiedAtSlot(ChannelNotOccupiedAtSlot):
    pass


class ZeroProbabilityCondition(MziError, ValueError):
    pass


class MixedConfigurations(MziError, ValueError):
    pass


class FrameworkError(MziError, ValueError):
    pass


class InconsistentFramework(FrameworkError):
    def __init__(self, message: str, witness=None, max_offdiag: float | None = None):
        self.witness = witness
        self.max_offdiag = max_offdiag
        super().__init__(message)


class NonCommutingProjectors(FrameworkError):
    pass


class IncompatibleFrameworks(FrameworkError):
    def __init__(self, message: str, witness=None, max_offdiag: float | None = None):
        self.witness = witness
        self.max_offdiag = max_offdiag
        super().__init__(message)


class OrthogonalPostSelection(MziError, ValueError):
    pass
