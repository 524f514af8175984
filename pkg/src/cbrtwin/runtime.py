"""The digital-twin control loop.

Per production cycle: take the machine snapshot, check every case
condition, and when one holds run retrieve, reuse, execute. Settings act
from the next cycle on, so an applied solution is judged against the
following snapshot (revise), after which experience may be retained.
"""

from __future__ import annotations

import importlib
import json
import logging
import statistics
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path as FsPath
from typing import Any, Callable, Iterable

from .casebase import DEFAULT_FALLBACK, Case, CaseBase, FallbackDirective, Notify, PddlGoal, format_fallback, parse_case_base
from .config import TwinConfig
from .domain import DomainModel, Situation, parse_domain_model
from .engine import (Done, EngineConfig, Fallback, Outcome, RetrievalResult, SolutionPlan, TryNext,
                     instantiate_solution, observe_outcome, retain, retrieve, reuse, revise, run_calls,
                     save_case_base)
from .errors import CbrError, ParseError
from .explain import ExplainLog, ExplainRecord
from .expr import Path, eval_condition
from .pddl import KnowledgeBase, LimitExceeded, Unsolvable, goal_from_fallback, plan, plan_to_writes, validate_plan
from .plant import EndOfData, MachinePort, PortError, ReplayPort, ReplaySource, SimState, SimulatorPort, SituationLog
from .plugins import Registry, default_registry
from .similarity import SimilaritySpec, parse_similarity_spec

log = logging.getLogger(__name__)

PHASES = ("load", "evaluate", "retrieve", "reuse", "execute", "revise", "retain")
PATHS = ("no-trigger", "case-applied", "fallback", "notify")


# -- models ----------------------------------------------------------------

@dataclass
class Models:
    domains: list[DomainModel]
    casebase: CaseBase
    spec: SimilaritySpec
    kb: KnowledgeBase | None
    registry: Registry

    def type_of(self, path: str) -> str:
        from .domain import resolve_path
        return resolve_path(self.domains, path).type

    def paths(self) -> list[str]:
        return [p for m in self.domains for p in m.paths()]


def _read(path: FsPath) -> str:
    return FsPath(path).read_text(encoding="utf-8")


def load_plugins(specs: Iterable[str], registry: Registry) -> None:
    for spec in specs:
        module, _, func = spec.partition(":")
        try:
            hook = getattr(importlib.import_module(module), func or "register")
        except (ImportError, AttributeError) as exc:
            raise CbrError(f"cannot load plugin {spec!r}: {exc}") from exc
        hook(registry)


def check_fallbacks(cb: CaseBase, kb: KnowledgeBase | None, source: str | None = None) -> None:
    for case in cb.cases:
        if isinstance(case.fallback, PddlGoal):
            if kb is None:
                raise ParseError(f"case {case.name} has a pddl fallback but no knowledge base is configured",
                                 source=source)
            try:
                kb.check_goal(case.fallback.goal, case.fallback.domain)
            except ParseError as exc:
                raise ParseError(f"case {case.name}: {exc.message}", source=source) from None


def load_models(cfg: TwinConfig, registry: Registry | None = None) -> Models:
    """Load and cross-check every model named by the config; any problem is fatal."""
    registry = registry or default_registry()
    load_plugins(cfg.plugins, registry)
    domains = [parse_domain_model(_read(p), str(p)) for p in cfg.domains]
    cb = parse_case_base(_read(cfg.casebase), domains, str(cfg.casebase))
    spec = parse_similarity_spec(_read(cfg.similarity), domains, str(cfg.similarity))
    spec.bind(registry)
    kb = KnowledgeBase.load(cfg.knowledge_base) if cfg.knowledge_base is not None else None
    check_fallbacks(cb, kb, str(cfg.casebase))
    for case in cb.known_cases():
        for part in case.solution.parts:
            if hasattr(part, "handler"):
                registry.handler(part.handler)
    return Models(domains, cb, spec, kb, registry)


# -- clocks and traces -----------------------------------------------------

class VirtualClock:
    """Deterministic stand-in for ``time.perf_counter``: every reading advances one tick."""

    def __init__(self, tick: float = 0.001):
        self.tick = tick
        self.now = 0.0

    def __call__(self) -> float:
        self.now += self.tick
        return self.now


@dataclass
class CycleTrace:
    cycle_id: int
    path: str
    triggered: bool
    timings: dict[str, float] = field(default_factory=lambda: {p: 0.0 for p in PHASES})

    @property
    def total_ms(self) -> float:
        return sum(self.timings.values())

    def to_json(self) -> str:
        return json.dumps({**asdict(self), "total_ms": self.total_ms}, sort_keys=True, separators=(",", ":"))


class _Timer:
    def __init__(self, clock: Callable[[], float], trace: CycleTrace, phase: str):
        self.clock, self.trace, self.phase = clock, trace, phase

    def __enter__(self) -> None:
        self.start = self.clock()

    def __exit__(self, *exc: Any) -> None:
        self.trace.timings[self.phase] += max(0.0, (self.clock() - self.start) * 1000.0)


@dataclass(frozen=True)
class TimingRow:
    label: str
    count: int
    min: float | None
    max: float | None
    avg: float | None


def report_timings(traces: list[CycleTrace]) -> list[TimingRow]:
    """First cycle on its own; the rest split by whether any case condition held."""
    if not traces:
        raise ValueError("no cycle traces")
    groups = {
        "FirstCycle": [traces[0].total_ms],
        "NoCase": [t.total_ms for t in traces[1:] if not t.triggered],
        "CaseDetected": [t.total_ms for t in traces[1:] if t.triggered],
    }
    return [TimingRow(k, len(v), min(v), max(v), statistics.fmean(v)) if v else TimingRow(k, 0, None, None, None)
            for k, v in groups.items()]


def format_timings(rows: list[TimingRow]) -> str:
    out = [f"{'':<14}{'cycles':>8}{'min (ms)':>14}{'max (ms)':>14}{'avg (ms)':>14}"]
    for r in rows:
        if r.count == 0:
            out.append(f"{r.label:<14}{0:>8}{'absent':>14}{'absent':>14}{'absent':>14}")
        else:
            out.append(f"{r.label:<14}{r.count:>8}{r.min:>14.5f}{r.max:>14.5f}{r.avg:>14.5f}")
    return "\n".join(out) + "\n"


# -- the loop --------------------------------------------------------------

@dataclass
class Episode:
    record: ExplainRecord
    trigger: Case
    before: Situation
    remaining: RetrievalResult | None = None
    plan: SolutionPlan | None = None
    applied: Case | None = None


@dataclass
class RunSummary:
    cycles: int = 0
    paths: dict[str, int] = field(default_factory=lambda: {p: 0 for p in PATHS})
    outcomes: dict[str, int] = field(default_factory=dict)
    episodes: int = 0
    writes: int = 0
    learned: list[str] = field(default_factory=list)
    notifications: list[str] = field(default_factory=list)
    aborted: str | None = None
    traces: list[CycleTrace] = field(default_factory=list)

    def timing_rows(self) -> list[TimingRow]:
        return report_timings(self.traces)

    def render(self) -> str:
        lines = [f"cycles: {self.cycles} ({', '.join(f'{k} {v}' for k, v in self.paths.items())})"]
        outcomes = ", ".join(f"{k} {v}" for k, v in sorted(self.outcomes.items()))
        lines.append(f"episodes: {self.episodes}" + (f" ({outcomes})" if outcomes else ""))
        lines.append(f"config writes: {self.writes}")
        lines.append(f"learned cases: {', '.join(self.learned) if self.learned else 'none'}")
        if self.aborted:
            lines.append(f"aborted: {self.aborted}")
        text = "\n".join(lines) + "\n"
        if self.traces:
            text += "\n" + format_timings(self.timing_rows())
        return text


def make_port(cfg: TwinConfig, models: Models) -> MachinePort:
    if cfg.port == "replay":
        if cfg.replay is None:
            raise CbrError("[port] replay path is required for kind = replay")
        required = sorted({p for c in models.casebase.cases for p in _case_paths(c)} | set(models.spec.locals))
        return ReplayPort(ReplaySource(cfg.replay, models.domains, required, skip_bad_rows=cfg.skip_bad_rows))
    state = SimState.initial(cfg.sim_config, cfg.seed, _constants(cfg), cfg.barrel_temp)
    return SimulatorPort(state)


def _constants(cfg: TwinConfig) -> dict[str, float]:
    from .plant.sim import load_constants
    return load_constants(cfg.sim_constants)


def _case_paths(case: Case) -> list[str]:
    from .expr import condition_paths
    return condition_paths(case.condition)


class Twin:
    """Owns the port, the models and every log; one instance drives one run."""

    def __init__(self, cfg: TwinConfig, port: MachinePort | None = None, clock: Callable[[], float] | None = None,
                 registry: Registry | None = None, models: Models | None = None):
        self.cfg = cfg
        self.clock = clock or (VirtualClock() if cfg.clock == "virtual" else time.perf_counter)
        self._registry = registry
        start = self.clock()
        self.models = models or load_models(cfg, registry.copy() if registry else None)
        self.load_ms = (self.clock() - start) * 1000.0
        if cfg.port == "replay" and cfg.replay is not None and port is None:
            target = (cfg.log_dir / "situations.csv").resolve()
            if FsPath(cfg.replay).resolve() == target:
                raise CbrError(f"refusing to replay {cfg.replay}: it is this run's own situation log")
        self.port = port or make_port(cfg, self.models)
        self.write_enabled = cfg.write and self.port.capabilities().get("writable", False)
        cfg.log_dir.mkdir(parents=True, exist_ok=True)
        for name in ("explain.jsonl", "traces.jsonl", "situations.csv"):
            (cfg.log_dir / name).unlink(missing_ok=True)
        self.explain_log = ExplainLog(cfg.log_dir / "explain.jsonl")
        self.explain_log.path.touch()
        self.situation_log = SituationLog(cfg.log_dir / "situations.csv", self.models.paths())
        self.trace_path = cfg.log_dir / "traces.jsonl"
        self.summary = RunSummary()
        self.episode: Episode | None = None
        self._reload = False
        self._first = True

    @property
    def engine(self) -> EngineConfig:
        return self.cfg.engine

    @property
    def casebase(self) -> CaseBase:
        return self.models.casebase

    # hot reload ----------------------------------------------------------

    def request_reload(self) -> None:
        """Reload the models before the next cycle; on failure the old models stay."""
        self._reload = True

    def _maybe_reload(self) -> None:
        if not self._reload:
            return
        self._reload = False
        try:
            self.models = load_models(self.cfg, self._registry.copy() if self._registry else None)
            log.info("models reloaded")
        except (CbrError, OSError) as exc:
            log.error("model reload failed, keeping previous models: %s", exc)

    # port ----------------------------------------------------------------

    def _read(self) -> Situation:
        attempts = 0
        while True:
            try:
                return self.port.read_cycle()
            except PortError as exc:
                attempts += 1
                log.warning("port read failed (attempt %d of %d): %s", attempts, self.cfg.retries + 1, exc)
                if attempts > self.cfg.retries:
                    raise

    def _write(self, writes: list[tuple[str, Any]]) -> bool:
        attempts = 0
        while True:
            try:
                ack = self.port.write_config(writes)
                break
            except PortError as exc:
                attempts += 1
                log.warning("port write failed (attempt %d of %d): %s", attempts, self.cfg.retries + 1, exc)
                if attempts > self.cfg.retries:
                    raise
        if not ack.ok:
            log.error("machine rejected settings %s: %s", writes, ack.message)
            return False
        self.summary.writes += 1
        return True

    # episodes ------------------------------------------------------------

    def _open(self, situation: Situation, triggered: list[Case]) -> ExplainRecord:
        self.summary.episodes += 1
        return ExplainRecord(
            episode=self.summary.episodes, timestamp=situation.cycle_id, triggers=[c.name for c in triggered],
            situation=dict(situation.values), mode="write" if self.write_enabled else "recommend")

    def _close(self, record: ExplainRecord, outcome: str, cycle: int) -> None:
        record.outcome = outcome
        record.closed_at = cycle
        self.summary.outcomes[outcome] = self.summary.outcomes.get(outcome, 0) + 1
        self.explain_log.append(record)
        self.episode = None

    def _apply(self, ep: Episode, plan_: SolutionPlan, situation: Situation, trace: CycleTrace) -> str:
        """Execute a case solution or record it as a recommendation. Returns the cycle path."""
        with _Timer(self.clock, trace, "execute"):
            writes = [(p.path, v) for p, v in plan_.assignments]
            writes += run_calls(plan_, situation, self.models.registry)
            ep.record.attempts.append({"case": plan_.case, "solution": plan_.describe(), "result": None})
            if not self.write_enabled:
                ep.record.attempts[-1]["result"] = "recommended"
                self._close(ep.record, "recommended", situation.cycle_id)
                return "case-applied"
            if not self._write(writes):
                ep.record.attempts[-1]["result"] = "rejected"
                self._close(ep.record, "rejected", situation.cycle_id)
                return "case-applied"
            ep.plan, ep.applied, ep.before = plan_, self.casebase.get(plan_.case), situation
            self.episode = ep
        return "case-applied"

    def _fallback(self, ep: Episode, directive: FallbackDirective, situation: Situation, trace: CycleTrace) -> str:
        with _Timer(self.clock, trace, "execute"):
            if isinstance(directive, Notify):
                ep.record.fallback = {"kind": "notify", "detail": directive.message}
                log.warning("operator notification (%s): %s", ep.trigger.name, directive.message)
                self.summary.notifications.append(directive.message)
                self._close(ep.record, "notified", situation.cycle_id)
                return "notify"
            fb: dict[str, Any] = {"kind": "pddl", "detail": format_fallback(directive)}
            ep.record.fallback = fb
            if self.models.kb is None:
                fb["error"] = "no knowledge base configured"
                self._close(ep.record, "no-plan", situation.cycle_id)
                return "fallback"
            try:
                problem, entry = goal_from_fallback(directive, situation, self.models.kb)
                found = plan(entry.domain, problem, max_expansions=self.cfg.max_expansions)
            except (Unsolvable, LimitExceeded) as exc:
                fb["error"] = str(exc)
                log.warning("fallback planning for %s failed: %s", ep.trigger.name, exc)
                self.summary.notifications.append(str(exc))
                self._close(ep.record, "no-plan", situation.cycle_id)
                return "fallback"
            check = validate_plan(entry.domain, problem, found.steps)
            fb["plan"] = [str(s) for s in found.steps]
            fb["valid"] = check.valid
            assignments = []
            for path, value in plan_to_writes(found.steps, entry.mapping):
                ptype = self.models.type_of(path)
                assignments.append((Path(path, ptype), float(value) if ptype == "float" else value))
            plan_ = SolutionPlan(ep.trigger.name, assignments, origin="fallback")
            fb["writes"] = plan_.describe()
            if not check.valid or not assignments:
                fb["error"] = check.reason if not check.valid else "plan changes no machine setting"
                self._close(ep.record, "no-plan", situation.cycle_id)
                return "fallback"
            if not self.write_enabled:
                self._close(ep.record, "recommended", situation.cycle_id)
                return "fallback"
            if not self._write([(p.path, v) for p, v in assignments]):
                self._close(ep.record, "rejected", situation.cycle_id)
                return "fallback"
            ep.plan, ep.applied, ep.before = plan_, None, situation
            self.episode = ep
        return "fallback"

    def _start(self, situation: Situation, triggered: list[Case], trace: CycleTrace) -> str:
        record = self._open(situation, triggered)
        with _Timer(self.clock, trace, "retrieve"):
            result = retrieve(situation, self.casebase, self.models.spec, self.engine, self.models.registry,
                              self.cfg.workers or None)
        record.candidates = [{"case": c.case.name, "raw": c.raw, "effective": c.effective} for c in result.ranked]
        if result.ranked:
            with _Timer(self.clock, trace, "reuse"):
                plan_ = reuse(result, situation, self.models.registry)
            trigger = triggered[0]
            return self._apply(Episode(record, trigger, situation, result), plan_, situation, trace)
        source = next((c for c in triggered if c.fallback is not None), triggered[0])
        return self._fallback(Episode(record, source, situation, result), source.fallback or DEFAULT_FALLBACK,
                              situation, trace)

    def _revise(self, situation: Situation, trace: CycleTrace) -> str | None:
        """Judge the pending episode on this cycle's snapshot. Returns a path if it acted again."""
        ep = self.episode
        assert ep is not None and ep.plan is not None
        cycle = situation.cycle_id
        if ep.applied is None:  # a fallback plan
            with _Timer(self.clock, trace, "revise"):
                success = not eval_condition(ep.trigger.condition, situation.values)
            if not success:
                self._close(ep.record, "failure", cycle)
                return None
            self._retain(ep, Outcome(ep.before, situation, ep.trigger.name, True), cycle, trace)
            self._close(ep.record, "success", cycle)
            return None
        with _Timer(self.clock, trace, "revise"):
            outcome = observe_outcome(ep.applied, ep.before, situation)
            ep.record.attempts[-1]["result"] = "success" if outcome.success else "failure"
            action = revise(outcome, self.casebase, ep.trigger.fallback, ep.remaining)
            ep.remaining = ep.remaining.without(ep.applied.name)
            self._persist()
        if isinstance(action, Done):
            self._retain(ep, outcome, cycle, trace)
            self._close(ep.record, "success", cycle)
            return None
        if isinstance(action, TryNext):
            with _Timer(self.clock, trace, "reuse"):
                plan_ = instantiate_solution(action.candidate.case, situation, self.models.registry,
                                             action.candidate.raw)
            return self._apply(ep, plan_, situation, trace)
        assert isinstance(action, Fallback)
        return self._fallback(ep, action.directive, situation, trace)

    def _retain(self, ep: Episode, outcome: Outcome, cycle: int, trace: CycleTrace) -> None:
        with _Timer(self.clock, trace, "retain"):
            result = retain(outcome, self.casebase, self.models.spec, self.engine, trigger=ep.trigger,
                            executed=ep.plan, registry=self.models.registry, stamp=f"c{cycle}")
            ep.record.min_score = result.min_score
            if result.added is not None:
                ep.record.learned = result.added.name
                self.summary.learned.append(result.added.name)
                self._persist()

    def _persist(self) -> None:
        save_case_base(self.casebase, self.cfg.casebase_target)

    # cycle ---------------------------------------------------------------

    def step(self, situation: Situation) -> CycleTrace:
        trace = CycleTrace(situation.cycle_id, "no-trigger", False)
        if self._first:
            trace.timings["load"] = self.load_ms
            self._first = False
        self.situation_log.append(situation)
        with _Timer(self.clock, trace, "evaluate"):
            triggered = [c for c in self.casebase.cases if eval_condition(c.condition, situation.values)]
        trace.triggered = bool(triggered)
        path = None
        revised = self.episode is not None
        if revised:
            path = self._revise(situation, trace)
        if path is None and self.episode is None and triggered:
            if revised:
                # the episode just closed; the case base may have changed
                with _Timer(self.clock, trace, "evaluate"):
                    triggered = [c for c in self.casebase.cases if eval_condition(c.condition, situation.values)]
            if triggered:
                path = self._start(situation, triggered, trace)
        trace.path = path or "no-trigger"
        self.summary.cycles += 1
        self.summary.paths[trace.path] += 1
        self.summary.traces.append(trace)
        with self.trace_path.open("a", encoding="utf-8") as fh:
            fh.write(trace.to_json() + "\n")
        return trace

    def run(self, max_cycles: int | None = None, stop: Callable[[], bool] | None = None) -> RunSummary:
        try:
            while max_cycles is None or self.summary.cycles < max_cycles:
                if stop is not None and stop():
                    break
                self._maybe_reload()
                try:
                    situation = self._read()
                except EndOfData:
                    break
                self.step(situation)
        except PortError as exc:
            self.summary.aborted = f"port failure: {exc}"
        except KeyboardInterrupt:
            self.summary.aborted = "interrupted"
        if self.episode is not None:
            last = self.summary.traces[-1].cycle_id if self.summary.traces else self.episode.record.timestamp
            self._close(self.episode.record, "unresolved", last)
        if self.summary.traces:
            (self.cfg.log_dir / "timings.txt").write_text(format_timings(self.summary.timing_rows()), encoding="utf-8")
        return self.summary


def run_twin(cfg: TwinConfig, max_cycles: int | None = None, stop: Callable[[], bool] | None = None,
             port: MachinePort | None = None, **kwargs: Any) -> RunSummary:
    return Twin(cfg, port=port, **kwargs).run(max_cycles, stop)
