"""Exception hierarchy shared by the model languages, the engine and the runtime."""

from __future__ import annotations


class CbrError(Exception):
    """Base class for every domain error raised by the package."""


class ParseError(CbrError):
    """Syntax or well-formedness error in a model file."""

    def __init__(self, message: str, line: int = 0, column: int = 0, source: str | None = None):
        self.message = message
        self.line = line
        self.column = column
        self.source = source
        super().__init__(str(self))

    def __str__(self) -> str:
        where = f"{self.source}:" if self.source else ""
        if self.line:
            where += f"{self.line}:{self.column}:"
        return f"{where} {self.message}" if where else self.message


class ResolutionError(ParseError):
    """An attribute path, import or name does not resolve."""


class EvalError(CbrError):
    pass


class ExtractError(CbrError):
    """A case condition cannot be turned into a reference point."""


class MetricError(CbrError):
    pass


class PluginError(CbrError):
    """A manual metric or solution handler is not registered or misbehaved."""


class PersistenceError(CbrError):
    pass
