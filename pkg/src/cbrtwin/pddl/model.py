from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple


class Atom(NamedTuple):
    predicate: str
    args: tuple[str, ...]

    def __str__(self) -> str:
        return "(" + " ".join((self.predicate, *self.args)) + ")"


@dataclass(frozen=True)
class GroundLiteral:
    atom: Atom
    positive: bool = True

    def __str__(self) -> str:
        return str(self.atom) if self.positive else f"(not {self.atom})"


@dataclass(frozen=True)
class SchemaLiteral:
    """Literal inside an action schema; args may be ``?variables``."""

    predicate: str
    args: tuple[str, ...]
    positive: bool = True


@dataclass(frozen=True)
class ActionSchema:
    name: str
    parameters: tuple[tuple[str, str], ...]  # (?var, type)
    precondition: tuple[SchemaLiteral, ...]
    add: tuple[SchemaLiteral, ...]
    delete: tuple[SchemaLiteral, ...]


@dataclass(frozen=True)
class PddlDomain:
    name: str
    types: dict[str, str]  # type -> parent
    constants: dict[str, str]
    predicates: dict[str, tuple[str, ...]]  # name -> parameter types
    actions: tuple[ActionSchema, ...]

    def is_subtype(self, t: str, ancestor: str) -> bool:
        seen = set()
        while t not in seen:
            if t == ancestor:
                return True
            seen.add(t)
            if t not in self.types:
                return False
            t = self.types[t]
        return False


@dataclass(frozen=True)
class PddlProblem:
    name: str
    domain: str
    objects: dict[str, str]
    init: frozenset[Atom]
    goal: tuple[GroundLiteral, ...]


@dataclass(frozen=True)
class GroundAction:
    name: str
    args: tuple[str, ...]
    pre_pos: frozenset[Atom]
    pre_neg: frozenset[Atom]
    add: frozenset[Atom]
    delete: frozenset[Atom]

    def __str__(self) -> str:
        return "(" + " ".join((self.name, *self.args)) + ")"

    def applicable(self, state: frozenset[Atom]) -> bool:
        return self.pre_pos <= state and not (self.pre_neg & state)

    def apply(self, state: frozenset[Atom]) -> frozenset[Atom]:
        return (state - self.delete) | self.add


@dataclass
class Plan:
    steps: list[GroundAction] = field(default_factory=list)
    expansions: int = 0

    def __len__(self) -> int:
        return len(self.steps)

    def __iter__(self):
        return iter(self.steps)
