"""Bridge between continuous machine situations and the PDDL knowledge base.

A knowledge base directory holds, per planning domain ``<name>``:

* ``<name>.domain.pddl``  the STRIPS domain
* ``<name>.problem.pddl`` a problem template (objects and static facts; its goal is ignored)
* ``<name>.map``          the discretization mapping (INI syntax), one section per
  ladder-valued predicate::

      [flow]
      predicate = flow-level        ; (flow-level <object> <level>)
      object = machine
      attribute = PhaseData.injectionFlow
      levels = f1 f2 f3 f4
      edges = 27.5 42.5 57.5        ; bin i covers [edges[i-1], edges[i])
      bounds = 0 100                ; optional, values outside are clamped
      values = 20 35 50 65          ; optional, makes the ladder writable
"""

from __future__ import annotations

import bisect
import configparser
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping

from ..domain import Situation
from ..errors import CbrError, ParseError, ResolutionError
from .model import Atom, GroundAction, PddlDomain, PddlProblem
from .parser import check_ground_atom, parse_pddl_domain, parse_pddl_problem

log = logging.getLogger(__name__)


class MappingError(CbrError):
    pass


def _number(text: str) -> int | float:
    try:
        return int(text)
    except ValueError:
        return float(text)


@dataclass(frozen=True)
class Ladder:
    name: str
    predicate: str
    object: str
    attribute: str
    levels: tuple[str, ...]
    edges: tuple[float, ...]
    bounds: tuple[float, float] | None = None
    values: tuple[int | float, ...] | None = None

    def level_of(self, value: float) -> str:
        if self.bounds is not None:
            lo, hi = self.bounds
            if value < lo or value > hi:
                clamped = min(max(value, lo), hi)
                log.warning("%s=%s outside [%s, %s]; clamped to %s", self.attribute, value, lo, hi, clamped)
                value = clamped
        return self.levels[bisect.bisect_right(self.edges, value)]

    def value_of(self, level: str) -> int | float:
        if self.values is None:
            raise MappingError(f"ladder {self.name} ({self.attribute}) is read-only")
        return self.values[self.levels.index(level)]


@dataclass(frozen=True)
class MachineMapping:
    ladders: tuple[Ladder, ...]

    def by_predicate(self, predicate: str) -> Ladder | None:
        for ladder in self.ladders:
            if ladder.predicate == predicate:
                return ladder
        return None


def parse_mapping(text: str, filename: str | None = None) -> MachineMapping:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text, source=filename or "<mapping>")
    except configparser.Error as exc:
        raise ParseError(str(exc), source=filename) from None
    ladders = []
    for section in cp.sections():
        sec = cp[section]
        try:
            levels = tuple(sec["levels"].split())
            edges = tuple(float(x) for x in sec.get("edges", "").split())
            bounds = tuple(float(x) for x in sec["bounds"].split()) if "bounds" in sec else None
            values = tuple(_number(x) for x in sec["values"].split()) if "values" in sec else None
            ladder = Ladder(section, sec["predicate"].lower(), sec["object"].lower(), sec["attribute"],
                            tuple(l.lower() for l in levels), edges, bounds, values)
        except KeyError as exc:
            raise ParseError(f"mapping section [{section}] lacks key {exc.args[0]}", source=filename) from None
        except ValueError as exc:
            raise ParseError(f"mapping section [{section}]: {exc}", source=filename) from None
        if len(ladder.levels) != len(ladder.edges) + 1:
            raise ParseError(f"mapping section [{section}]: {len(levels)} levels need {len(levels) - 1} edges",
                             source=filename)
        if list(ladder.edges) != sorted(ladder.edges):
            raise ParseError(f"mapping section [{section}]: edges must be ascending", source=filename)
        if ladder.bounds is not None and (len(ladder.bounds) != 2 or ladder.bounds[0] >= ladder.bounds[1]):
            raise ParseError(f"mapping section [{section}]: bounds must be 'min max'", source=filename)
        if ladder.values is not None and len(ladder.values) != len(ladder.levels):
            raise ParseError(f"mapping section [{section}]: one value per level required", source=filename)
        ladders.append(ladder)
    return MachineMapping(tuple(ladders))


@dataclass(frozen=True)
class PlanningEntry:
    domain: PddlDomain
    template: PddlProblem
    mapping: MachineMapping


class KnowledgeBase:
    def __init__(self, entries: Mapping[str, PlanningEntry]):
        self.entries = dict(entries)

    @classmethod
    def load(cls, directory: str | Path) -> "KnowledgeBase":
        directory = Path(directory)
        entries = {}
        for dfile in sorted(directory.glob("*.domain.pddl")):
            stem = dfile.name[: -len(".domain.pddl")]
            domain = parse_pddl_domain(dfile.read_text(encoding="utf-8"), str(dfile))
            pfile = directory / f"{stem}.problem.pddl"
            mfile = directory / f"{stem}.map"
            if not pfile.exists() or not mfile.exists():
                raise ResolutionError(f"knowledge base entry {stem} needs {pfile.name} and {mfile.name}",
                                      source=str(directory))
            template = parse_pddl_problem(pfile.read_text(encoding="utf-8"), domain, str(pfile), require_goal=False)
            mapping = parse_mapping(mfile.read_text(encoding="utf-8"), str(mfile))
            for ladder in mapping.ladders:
                for level in ladder.levels:
                    check_ground_atom(Atom(ladder.predicate, (ladder.object, level)), domain,
                                      template.objects, f"mapping {mfile.name}", str(mfile))
            entries[domain.name] = PlanningEntry(domain, template, mapping)
        return cls(entries)

    def entry(self, name: str | None) -> PlanningEntry:
        if name is None:
            if len(self.entries) != 1:
                raise ResolutionError("fallback names no planning domain and the knowledge base has "
                                      f"{len(self.entries)} domains")
            return next(iter(self.entries.values()))
        if name not in self.entries:
            raise ResolutionError(f"planning domain {name!r} not in knowledge base")
        return self.entries[name]

    def check_goal(self, goal: Iterable, domain_name: str | None) -> None:
        entry = self.entry(domain_name)
        for lit in goal:
            check_ground_atom(lit.atom, entry.domain, entry.template.objects, "fallback goal")


def goal_from_fallback(directive, values: Mapping[str, Any], kb: KnowledgeBase) -> tuple[PddlProblem, PlanningEntry]:
    """Problem whose init is the template's static facts plus the discretized situation."""
    entry = kb.entry(directive.domain)
    if isinstance(values, Situation):
        values = values.values
    init = set(entry.template.init)
    # drop template facts over mapped predicates; the situation decides them
    mapped = {l.predicate for l in entry.mapping.ladders}
    init = {a for a in init if a.predicate not in mapped}
    for ladder in entry.mapping.ladders:
        if ladder.attribute not in values:
            raise MappingError(f"situation lacks {ladder.attribute}, needed by ladder {ladder.name}")
        init.add(Atom(ladder.predicate, (ladder.object, ladder.level_of(values[ladder.attribute]))))
    problem = PddlProblem(f"fallback-{entry.domain.name}", entry.domain.name, dict(entry.template.objects),
                          frozenset(init), tuple(directive.goal))
    for lit in problem.goal:
        check_ground_atom(lit.atom, entry.domain, problem.objects, "fallback goal")
    return problem, entry


def plan_to_writes(steps: Iterable[GroundAction], mapping: MachineMapping) -> list[tuple[str, int | float]]:
    """Translate plan steps into machine writes via the writable ladders.

    A step that adds ``(pred obj level)`` for a writable ladder becomes the write
    ``attribute := value(level)``; later steps override earlier ones.
    """
    writes: dict[str, int | float] = {}
    for step in steps:
        for atom in sorted(step.add):
            ladder = mapping.by_predicate(atom.predicate)
            if ladder is None or ladder.values is None or atom.args[0] != ladder.object:
                continue
            writes[ladder.attribute] = ladder.value_of(atom.args[1])
    return list(writes.items())
