"""Twin configuration file (INI syntax).

::

    [models]
    domain = injection.dm              ; one or more, whitespace separated
    casebase = injection.cb
    similarity = injection.cs
    knowledge_base = kb                ; directory of planning domains
    plugins =                          ; module:function hooks, called with the plugin registry

    [engine]
    retrieval_threshold = 0.2
    learning_threshold = 0.3
    success_penalty_factor = 0.5
    workers = 0                        ; >1 scores cases on a thread pool
    max_expansions = 100000

    [port]
    kind = sim                         ; sim | replay
    replay =                           ; CSV path for kind = replay
    skip_bad_rows = false
    write = true                       ; false: recommendation-only
    retries = 3
    seed = 0

    [sim]                              ; initial machine settings
    cylinderHeating = 5

    [sim.constants]                    ; overrides of the simulator constants table
    noise = 1.0

    [logs]
    dir = twin-out
    casebase =                         ; where the case base is persisted; default: its source file
    clock = wall                       ; wall | virtual

Paths under ``[models]`` and ``[port] replay`` are relative to the config
file. ``[logs] dir`` is relative to the working directory and
``[logs] casebase`` to the log directory.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

from .engine import EngineConfig
from .errors import ParseError


@dataclass(frozen=True)
class TwinConfig:
    domains: tuple[Path, ...]
    casebase: Path
    similarity: Path
    knowledge_base: Path | None = None
    plugins: tuple[str, ...] = ()
    engine: EngineConfig = EngineConfig()
    workers: int = 0
    max_expansions: int = 100_000
    port: str = "sim"
    replay: Path | None = None
    skip_bad_rows: bool = False
    write: bool = True
    retries: int = 3
    seed: int = 0
    sim_config: dict[str, Any] = field(default_factory=dict)
    sim_constants: dict[str, float] = field(default_factory=dict)
    barrel_temp: float | None = None
    log_dir: Path = Path("twin-out")
    casebase_out: Path | None = None
    clock: str = "wall"

    @property
    def casebase_target(self) -> Path:
        return self.casebase_out if self.casebase_out is not None else self.casebase

    def with_overrides(self, **changes: Any) -> "TwinConfig":
        return replace(self, **changes)


def _number(text: str) -> int | float:
    try:
        return int(text)
    except ValueError:
        return float(text)


def load_config(path: str | os.PathLike) -> TwinConfig:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    return parse_config(text, path.parent, str(path))


def parse_config(text: str, base: Path, filename: str = "<config>") -> TwinConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=filename)
    except configparser.Error as exc:
        raise ParseError(str(exc), source=filename) from None

    def get(section: str, key: str, default: str | None = None) -> str | None:
        if cp.has_option(section, key):
            value = cp.get(section, key).strip()
            return value if value else default
        return default

    def need(section: str, key: str) -> str:
        value = get(section, key)
        if value is None:
            raise ParseError(f"[{section}] {key} is required", source=filename)
        return value

    def rel(value: str | None) -> Path | None:
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else base / p

    try:
        engine = EngineConfig(
            float(get("engine", "retrieval_threshold", "0.2")),
            float(get("engine", "learning_threshold", "0.3")),
            float(get("engine", "success_penalty_factor", "0.5")),
        )
        log_dir = Path(get("logs", "dir", "twin-out"))
        cb_out = get("logs", "casebase")
        kind = get("port", "kind", "sim")
        if kind not in ("sim", "replay"):
            raise ValueError(f"[port] kind must be sim or replay, not {kind!r}")
        clock = get("logs", "clock", "wall")
        if clock not in ("wall", "virtual"):
            raise ValueError(f"[logs] clock must be wall or virtual, not {clock!r}")
        sim_config = {k: _number(v) for k, v in cp.items("sim")} if cp.has_section("sim") else {}
        barrel = sim_config.pop("barrel_temp", None)
        constants = {k: float(v) for k, v in cp.items("sim.constants")} if cp.has_section("sim.constants") else {}
        return TwinConfig(
            domains=tuple(rel(p) for p in need("models", "domain").split()),
            casebase=rel(need("models", "casebase")),
            similarity=rel(need("models", "similarity")),
            knowledge_base=rel(get("models", "knowledge_base")),
            plugins=tuple((get("models", "plugins") or "").split()),
            engine=engine,
            workers=int(get("engine", "workers", "0")),
            max_expansions=int(get("engine", "max_expansions", "100000")),
            port=kind,
            replay=rel(get("port", "replay")),
            skip_bad_rows=cp.getboolean("port", "skip_bad_rows", fallback=False),
            write=cp.getboolean("port", "write", fallback=True),
            retries=int(get("port", "retries", "3")),
            seed=int(get("port", "seed", "0")),
            sim_config=sim_config,
            sim_constants=constants,
            barrel_temp=None if barrel is None else float(barrel),
            log_dir=log_dir,
            casebase_out=(cb_out if Path(cb_out).is_absolute() else log_dir / cb_out) if cb_out else None,
            clock=clock,
        )
    except ValueError as exc:
        raise ParseError(str(exc), source=filename) from None
