"""CSV replay of recorded cycles, and the situation log that produces such files.

Format: UTF-8, comma-separated, header row of dotted attribute paths
(``PhaseData.switchOverVolume``), one row per production cycle. One column
holds the machine cycle counter.
"""

from __future__ import annotations

import csv
import logging
import os
from pathlib import Path
from typing import Any, Iterable, Iterator

from ..domain import DomainModel, Situation, resolve_path
from ..errors import CbrError, ResolutionError
from .port import Ack, EndOfData

log = logging.getLogger(__name__)

CYCLE_COLUMN = "ProcessData.cycleId"


class RowError(CbrError):
    def __init__(self, row: int, message: str):
        super().__init__(f"row {row}: {message}")
        self.row = row


def _convert(text: str, type_: str) -> Any:
    if type_ == "int":
        return int(text)
    if type_ == "float":
        return float(text)
    if type_ == "boolean":
        low = text.strip().lower()
        if low in ("true", "1"):
            return True
        if low in ("false", "0"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    return text


def format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value) if isinstance(value, float) else str(value)


class ReplaySource:
    """Reads rows in order. Columns are checked against the domain models when opened."""

    def __init__(self, path: str | os.PathLike, models: Iterable[DomainModel], required: Iterable[str] = (),
                 cycle_column: str = CYCLE_COLUMN, skip_bad_rows: bool = False):
        self.path = Path(path)
        self.models = list(models)
        self.cycle_column = cycle_column
        self.skip_bad_rows = skip_bad_rows
        self._fh = self.path.open(encoding="utf-8", newline="")
        self._reader = csv.reader(self._fh)
        try:
            header = next(self._reader)
        except StopIteration:
            self._fh.close()
            raise CbrError(f"{self.path}: empty replay file") from None
        self.columns = [h.strip() for h in header]
        try:
            self.types = [resolve_path(self.models, h).type for h in self.columns]
        except ResolutionError as exc:
            self._fh.close()
            raise CbrError(f"{self.path}: header: {exc.message}") from None
        missing = [p for p in [cycle_column, *required] if p not in self.columns]
        if missing:
            self._fh.close()
            raise CbrError(f"{self.path}: missing columns: {', '.join(dict.fromkeys(missing))}")
        self.row = 0
        self.last_cycle: int | None = None

    def close(self) -> None:
        self._fh.close()

    def __iter__(self) -> Iterator[Situation]:
        while True:
            try:
                yield self.next()
            except EndOfData:
                return

    def next(self) -> Situation:
        while True:
            try:
                cells = next(self._reader)
            except StopIteration:
                self.close()
                raise EndOfData(f"{self.path}: end of data after {self.row} rows") from None
            self.row += 1
            if not any(c.strip() for c in cells):
                continue
            try:
                return self._situation(cells)
            except RowError as exc:
                if not self.skip_bad_rows:
                    raise
                log.warning("%s: skipping %s", self.path, exc)

    def _situation(self, cells: list[str]) -> Situation:
        if len(cells) != len(self.columns):
            raise RowError(self.row, f"expected {len(self.columns)} cells, found {len(cells)}")
        values = {}
        for col, type_, cell in zip(self.columns, self.types, cells):
            try:
                values[col] = _convert(cell.strip(), type_)
            except ValueError:
                raise RowError(self.row, f"{col}: {cell!r} is not a valid {type_}") from None
        cycle = values[self.cycle_column]
        if not isinstance(cycle, int):
            raise RowError(self.row, f"cycle counter {self.cycle_column} must be an integer")
        if self.last_cycle is not None and cycle <= self.last_cycle:
            raise RowError(self.row, f"cycle counter {cycle} does not increase (previous {self.last_cycle})")
        self.last_cycle = cycle
        return Situation(cycle, values)


def replay_step(src: ReplaySource) -> Situation | EndOfData:
    try:
        return src.next()
    except EndOfData as end:
        return end


class ReplayPort:
    """Read-only machine port over a :class:`ReplaySource`."""

    def __init__(self, source: ReplaySource):
        self.source = source
        self.write_attempts = 0

    def read_cycle(self) -> Situation:
        return self.source.next()

    def write_config(self, assignments: Iterable[tuple[str, Any]]) -> Ack:
        self.write_attempts += 1
        return Ack(False, "read-only source")

    def capabilities(self) -> dict[str, bool]:
        return {"writable": False}


class SituationLog:
    """Appends situations in the replay format, so a run's log can be replayed."""

    def __init__(self, path: str | os.PathLike, order: Iterable[str] = ()):
        self.path = Path(path)
        self.order = list(order)
        self.columns: list[str] | None = None

    def append(self, situation: Situation) -> None:
        new = self.columns is None
        if new:
            known = [p for p in self.order if p in situation.values]
            self.columns = known + sorted(p for p in situation.values if p not in known)
        with self.path.open("w" if new else "a", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            if new:
                writer.writerow(self.columns)
            writer.writerow([format_value(situation.values[c]) for c in self.columns])
