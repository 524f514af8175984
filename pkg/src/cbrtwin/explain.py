"""Append-only explain log: one JSON record per reasoning episode."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable

from .errors import PersistenceError


@dataclass
class ExplainRecord:
    """What the twin saw, considered, did and learned in one episode.

    ``timestamp`` is the id of the cycle that triggered the episode; logical
    time keeps logs reproducible across runs.
    """

    episode: int
    timestamp: int
    triggers: list[str]
    situation: dict[str, Any]
    candidates: list[dict[str, Any]] = field(default_factory=list)
    attempts: list[dict[str, Any]] = field(default_factory=list)
    fallback: dict[str, Any] | None = None
    outcome: str = "pending"
    closed_at: int | None = None
    learned: str | None = None
    min_score: float | None = None
    mode: str = "write"

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ExplainRecord":
        return cls(**{k: data[k] for k in cls.__dataclass_fields__ if k in data})

    def cases(self) -> set[str]:
        names = set(self.triggers)
        names.update(c["case"] for c in self.candidates)
        names.update(a["case"] for a in self.attempts)
        if self.learned:
            names.add(self.learned)
        return names


class ExplainLog:
    def __init__(self, path: str | os.PathLike):
        self.path = Path(path)

    def append(self, record: ExplainRecord) -> None:
        try:
            with self.path.open("a", encoding="utf-8", newline="\n") as fh:
                fh.write(record.to_json() + "\n")
                fh.flush()
        except OSError as exc:
            raise PersistenceError(f"cannot append to explain log {self.path}: {exc}") from exc


def read_log(path: str | os.PathLike) -> list[ExplainRecord]:
    """Read every complete record; a torn final line (crash mid-append) is ignored."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise PersistenceError(f"cannot read explain log {path}: {exc}") from exc
    lines = text.split("\n")
    records = []
    for i, line in enumerate(lines):
        if not line.strip():
            continue
        try:
            records.append(ExplainRecord.from_dict(json.loads(line)))
        except (json.JSONDecodeError, TypeError) as exc:
            if i == len(lines) - 1:
                break
            raise PersistenceError(f"{path}:{i + 1}: corrupt explain record: {exc}") from exc
    return records


def _fmt(x: float) -> str:
    return f"{x:.4f}"


def explain(records: Iterable[ExplainRecord], case: str | None = None, cycle_from: int | None = None,
            cycle_to: int | None = None) -> str:
    """Human-readable chronological report, optionally filtered by case name and cycle range."""
    chosen = [r for r in records
              if (case is None or case in r.cases())
              and (cycle_from is None or r.timestamp >= cycle_from)
              and (cycle_to is None or r.timestamp <= cycle_to)]
    if not chosen:
        return "no reasoning episodes recorded\n"
    chosen.sort(key=lambda r: (r.timestamp, r.episode))
    out: list[str] = []
    for r in chosen:
        closed = f", closed at cycle {r.closed_at}" if r.closed_at is not None else ""
        out.append(f"episode {r.episode} at cycle {r.timestamp} ({r.mode}{closed})")
        out.append(f"  trigger: {', '.join(r.triggers) or '-'}")
        if r.candidates:
            out.append("  candidates:")
            for c in r.candidates:
                out.append(f"    {c['case']:<28} raw={_fmt(c['raw'])} effective={_fmt(c['effective'])}")
        else:
            out.append("  candidates: none within threshold")
        for a in r.attempts:
            verdict = a.get("result") or "-"
            out.append(f"  applied {a['case']}: {'; '.join(a['solution'])} -> {verdict}")
        if r.fallback:
            fb = r.fallback
            out.append(f"  fallback {fb['kind']}: {fb.get('detail', '')}".rstrip())
            for step in fb.get("plan", []):
                out.append(f"    step {step}")
            if fb.get("writes"):
                out.append(f"    writes {'; '.join(fb['writes'])}")
        out.append(f"  outcome: {r.outcome}")
        if r.learned:
            out.append(f"  learned case: {r.learned} (nearest existing case at {_fmt(r.min_score)})"
                       if r.min_score is not None else f"  learned case: {r.learned}")
        elif r.min_score is not None:
            out.append(f"  nothing learned (nearest existing case at {_fmt(r.min_score)})")
    return "\n".join(out) + "\n"
