"""The contract between the twin runtime and a machine (real, simulated or replayed)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Iterable, Protocol

from ..domain import Situation
from ..errors import CbrError


class PortError(CbrError):
    """Transient failure talking to the machine; the runtime retries a bounded number of times."""


class EndOfData(CbrError):
    """A finite source has no more cycles."""


@dataclass(frozen=True)
class Ack:
    ok: bool
    message: str = ""


class MachinePort(Protocol):
    def read_cycle(self) -> Situation:
        """Block until the next production cycle completes and return its snapshot.

        Cycle ids strictly increase.
        """

    def write_config(self, assignments: Iterable[tuple[str, Any]]) -> Ack:
        """Queue setting changes; they take effect from the next cycle on."""

    def capabilities(self) -> dict[str, bool]:
        ...
