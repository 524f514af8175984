"""Retrieve, reuse, revise and retain over a case base."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path as FsPath
from typing import Any, Callable, Protocol

from .casebase import DEFAULT_FALLBACK, Assignment, Call, Case, CaseBase, FallbackDirective, Solution, print_case_base
from .domain import Situation
from .errors import CbrError, EvalError, ExtractError, PersistenceError
from .expr import And, Compare, Literal, Not, Path, condition_paths, eval_arith, eval_condition
from .persist import atomic_write_text
from .plugins import Registry, default_registry
from .similarity import NotComparable, SimilaritySpec, extract_reference, global_similarity, plugins_reentrant

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EngineConfig:
    retrieval_threshold: float = 0.2
    learning_threshold: float = 0.3
    success_penalty_factor: float = 0.5

    def __post_init__(self) -> None:
        for name in ("retrieval_threshold", "learning_threshold", "success_penalty_factor"):
            value = getattr(self, name)
            if not 0 < value <= 1:
                raise ValueError(f"{name} must lie in (0, 1], got {value}")
        if self.retrieval_threshold > self.learning_threshold:
            log.warning("retrieval threshold %s exceeds learning threshold %s",
                        self.retrieval_threshold, self.learning_threshold)


def effective_score(raw: float, case: Case, cfg: EngineConfig) -> float:
    """Raw distance plus a penalty that grows as the case keeps failing."""
    return raw + cfg.success_penalty_factor * (1.0 - case.stats.success_rate)


@dataclass(frozen=True)
class Candidate:
    case: Case
    raw: float
    effective: float


@dataclass
class RetrievalResult:
    ranked: list[Candidate]
    triggers: list[Case] = field(default_factory=list)
    threshold: float = 0.2

    def without(self, name: str) -> "RetrievalResult":
        return RetrievalResult([c for c in self.ranked if c.case.name != name], self.triggers, self.threshold)


def _score_case(case: Case, values: dict, spec: SimilaritySpec, registry: Registry) -> float | None:
    try:
        ref = extract_reference(case)
        return global_similarity(spec, values, ref, registry)
    except (ExtractError, NotComparable):
        return None


def retrieve(situation: Situation, cb: CaseBase, spec: SimilaritySpec, cfg: EngineConfig = EngineConfig(),
             registry: Registry | None = None, workers: int | None = None) -> RetrievalResult:
    """Rank known cases by effective score among those with raw score below the threshold.

    Unknown cases, and known cases without a comparable reference point,
    only show up as triggers when their condition holds.
    """
    registry = registry or default_registry()
    values = situation.values
    known = cb.known_cases()
    if workers and workers > 1 and len(known) > 1 and plugins_reentrant(spec, registry):
        with ThreadPoolExecutor(max_workers=workers) as pool:
            scores = list(pool.map(lambda c: _score_case(c, values, spec, registry), known))
    else:
        scores = [_score_case(c, values, spec, registry) for c in known]
    ranked: list[Candidate] = []
    triggers: list[Case] = []
    for case, raw in zip(known, scores):
        if raw is None:
            if eval_condition(case.condition, values):
                triggers.append(case)
            continue
        if raw < cfg.retrieval_threshold:
            ranked.append(Candidate(case, raw, effective_score(raw, case, cfg)))
    for case in cb.cases:
        if not case.known and eval_condition(case.condition, values):
            triggers.append(case)
    ranked.sort(key=lambda c: (c.effective, c.case.name))
    return RetrievalResult(ranked, triggers, cfg.retrieval_threshold)


class NoCandidate(CbrError):
    pass


@dataclass
class SolutionPlan:
    case: str
    assignments: list[tuple[Path, Any]]
    calls: list[tuple[str, tuple]] = field(default_factory=list)
    raw: float | None = None
    origin: str = "case"  # case | fallback

    def describe(self) -> list[str]:
        out = [f"call {name}({', '.join(repr(a) for a in args)})" for name, args in self.calls]
        out += [f"{p.path} := {v!r}" for p, v in self.assignments]
        return out


def instantiate_solution(case: Case, situation: Situation, registry: Registry | None = None,
                         raw: float | None = None) -> SolutionPlan:
    if case.solution is None:
        raise NoCandidate(f"case {case.name} has no solution")
    registry = registry or default_registry()
    assignments: list[tuple[Path, Any]] = []
    calls: list[tuple[str, tuple]] = []
    for part in case.solution.parts:
        if isinstance(part, Assignment):
            value = eval_arith(part.value, situation.values)
            if part.target.type == "float":
                value = float(value)
            assignments.append((part.target, value))
        else:
            registry.handler(part.handler)
            calls.append((part.handler, tuple(eval_arith(a, situation.values) for a in part.args)))
    return SolutionPlan(case.name, assignments, calls, raw)


class ReuseStrategy(Protocol):
    def __call__(self, result: RetrievalResult, situation: Situation,
                 registry: Registry | None = None) -> SolutionPlan: ...


def reuse(result: RetrievalResult, situation: Situation, registry: Registry | None = None) -> SolutionPlan:
    """Most-similar reuse: instantiate the top-ranked case's solution against the situation."""
    if not result.ranked:
        raise NoCandidate("no case within the retrieval threshold")
    top = result.ranked[0]
    return instantiate_solution(top.case, situation, registry, top.raw)


@dataclass(frozen=True)
class Outcome:
    before: Situation
    after: Situation
    applied_case: str
    success: bool


def observe_outcome(case: Case, before: Situation, after: Situation) -> Outcome:
    """Success iff the case's yields consequence holds after; for cases without
    a solution, iff the case's own condition no longer holds."""
    if case.solution is not None:
        ok = eval_condition(case.solution.yields, after.values)
    else:
        ok = not eval_condition(case.condition, after.values)
    return Outcome(before, after, case.name, ok)


@dataclass(frozen=True)
class Done:
    pass


@dataclass(frozen=True)
class TryNext:
    candidate: Candidate


@dataclass(frozen=True)
class Fallback:
    directive: FallbackDirective


ReviseAction = Done | TryNext | Fallback


def revise(outcome: Outcome, cb: CaseBase, fallback: FallbackDirective | None,
           remaining: RetrievalResult) -> ReviseAction:
    """Record the outcome in the applied case's stats and decide what happens next."""
    case = cb.get(outcome.applied_case)
    case.stats.record(outcome.success)
    if outcome.success:
        return Done()
    rest = remaining.without(outcome.applied_case).ranked
    if rest:
        return TryNext(rest[0])
    return Fallback(fallback or DEFAULT_FALLBACK)


@dataclass
class RetainResult:
    added: Case | None
    min_score: float | None
    reinforced: str | None = None


def _literal_for(path: Path, value: Any) -> Literal:
    if path.type == "float":
        return Literal(float(value), "float")
    if path.type == "int":
        return Literal(int(value), "int")
    return Literal.of(value)


def build_learned_case(name: str, outcome: Outcome, trigger: Case, executed: SolutionPlan) -> Case:
    """Equality conditions over the attributes touched by the trigger or the solution."""
    types: dict[str, str] = {}
    for cmp in _comparisons(trigger.condition):
        types.setdefault(cmp.left.path, cmp.left.type)
    for target, _ in executed.assignments:
        types.setdefault(target.path, target.type)
    touched = condition_paths(trigger.condition)
    touched += [p.path for p, _ in executed.assignments if p.path not in touched]
    conjuncts = []
    for path in touched:
        if path not in outcome.before.values:
            continue
        p = Path(path, types[path])
        conjuncts.append(Compare("==", p, _literal_for(p, outcome.before.values[path])))
    if not conjuncts:
        raise CbrError("nothing to learn: no touched attribute is present in the situation")
    condition = conjuncts[0] if len(conjuncts) == 1 else And(tuple(conjuncts))
    last: dict[str, tuple[Path, Any]] = {}
    for target, value in executed.assignments:
        last[target.path] = (target, value)
    parts = tuple(Assignment(t, _literal_for(t, v)) for t, v in last.values())
    parts += tuple(Call(name_, tuple(Literal.of(a) for a in args)) for name_, args in executed.calls)
    if not parts:
        raise CbrError("nothing to learn: the executed plan changed nothing")
    return Case(name, condition, Solution(parts, Not(trigger.condition)))


def _comparisons(expr) -> list[Compare]:
    if isinstance(expr, Compare):
        return [expr]
    if isinstance(expr, Not):
        return _comparisons(expr.operand)
    out: list[Compare] = []
    for item in expr.items:
        out.extend(_comparisons(item))
    return out


def retain(outcome: Outcome, cb: CaseBase, spec: SimilaritySpec, cfg: EngineConfig, *, trigger: Case,
           executed: SolutionPlan, registry: Registry | None = None, path: str | FsPath | None = None,
           stamp: str | None = None) -> RetainResult:
    """Learn from a successful outcome.

    Verbatim reuse at raw score 0 only reinforces. Otherwise a candidate case
    is built and added when its smallest distance to every comparable known
    case exceeds the learning threshold. The case base is written to
    ``path`` whenever a case is added.
    """
    if not outcome.success:
        raise ValueError("retain needs a successful outcome")
    if executed.origin == "case" and executed.raw == 0:
        return RetainResult(None, 0.0, executed.case)
    stem = f"learned_{stamp if stamp is not None else outcome.after.cycle_id}"
    candidate = build_learned_case(cb.fresh_name(stem), outcome, trigger, executed)
    registry = registry or default_registry()
    scores = [s for s in (_score_case(c, outcome.before.values, spec, registry) for c in cb.known_cases())
              if s is not None]
    min_score = min(scores) if scores else None
    reinforced = executed.case if executed.origin == "case" else None
    if min_score is not None and min_score <= cfg.learning_threshold:
        return RetainResult(None, min_score, reinforced)
    try:
        extract_reference(candidate)
    except ExtractError:  # pragma: no cover - equality conjunctions always extract
        raise
    cb.add(candidate)
    if path is not None:
        save_case_base(cb, path)
    return RetainResult(candidate, min_score, reinforced)


def save_case_base(cb: CaseBase, path: str | FsPath) -> None:
    try:
        atomic_write_text(path, print_case_base(cb))
    except OSError as exc:
        raise PersistenceError(f"could not persist case base to {path}: {exc}") from exc


def run_calls(plan: SolutionPlan, situation: Situation, registry: Registry) -> list[tuple[str, Any]]:
    """Execute ``call`` parts; returns extra writes produced by handlers."""
    extra: list[tuple[str, Any]] = []
    for name, args in plan.calls:
        result: Callable = registry.handler(name).fn
        try:
            produced = result(dict(situation.values), *args)
        except Exception as exc:
            raise EvalError(f"solution handler {name!r} failed: {exc}") from exc
        if produced:
            extra.extend(produced.items())
    return extra
