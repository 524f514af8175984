"""Grounding, greedy best-first search, and an independent plan validator."""

from __future__ import annotations

import heapq
import itertools
from typing import Iterable, NamedTuple, Sequence

from ..errors import CbrError
from .model import ActionSchema, Atom, GroundAction, Plan, PddlDomain, PddlProblem, SchemaLiteral


class PlanningError(CbrError):
    def __init__(self, message: str, expansions: int = 0, generated: int = 0):
        super().__init__(message)
        self.expansions = expansions
        self.generated = generated


class Unsolvable(PlanningError):
    pass


class LimitExceeded(PlanningError):
    pass


def _bind(lits: Iterable[SchemaLiteral], binding: dict[str, str]) -> frozenset[Atom]:
    return frozenset(Atom(l.predicate, tuple(binding.get(a, a) for a in l.args)) for l in lits)


def ground(domain: PddlDomain, problem: PddlProblem) -> list[GroundAction]:
    """Instantiate every schema with all type-compatible object tuples.

    Returned in a fixed order (schema order, then argument tuples sorted)
    with duplicates removed.
    """
    objects = dict(domain.constants)
    objects.update(problem.objects)
    known = set(domain.types) | {"object"}
    for name, t in objects.items():
        if t not in known:
            raise PlanningError(f"type mismatch: object {name} has type {t} unknown to domain {domain.name}")
    by_type: dict[str, list[str]] = {}
    for t in known:
        by_type[t] = sorted(o for o, ot in objects.items() if domain.is_subtype(ot, t))
    seen: set[tuple[str, tuple[str, ...]]] = set()
    out: list[GroundAction] = []
    for schema in domain.actions:
        pools = [by_type[t] for _, t in schema.parameters]
        for combo in itertools.product(*pools):
            key = (schema.name, combo)
            if key in seen:
                continue
            seen.add(key)
            out.append(instantiate(schema, combo))
    return out


def instantiate(schema: ActionSchema, args: Sequence[str]) -> GroundAction:
    binding = {var: obj for (var, _), obj in zip(schema.parameters, args)}
    pre_pos = _bind((l for l in schema.precondition if l.positive), binding)
    pre_neg = _bind((l for l in schema.precondition if not l.positive), binding)
    return GroundAction(schema.name, tuple(args), pre_pos, pre_neg,
                        _bind(schema.add, binding), _bind(schema.delete, binding))


def _goal_sets(problem: PddlProblem) -> tuple[frozenset[Atom], frozenset[Atom]]:
    pos = frozenset(g.atom for g in problem.goal if g.positive)
    neg = frozenset(g.atom for g in problem.goal if not g.positive)
    return pos, neg


def plan(domain: PddlDomain, problem: PddlProblem, max_expansions: int = 100_000,
         max_plan_length: int = 1_000) -> Plan:
    """Greedy best-first search with the goal-count heuristic.

    Ties are broken FIFO; states are deduplicated on the full atom set.
    Raises Unsolvable when the reachable space is exhausted and
    LimitExceeded when an expansion or length limit cut the search short.
    """
    actions = ground(domain, problem)
    goal_pos, goal_neg = _goal_sets(problem)

    def h(state: frozenset[Atom]) -> int:
        return len(goal_pos - state) + len(goal_neg & state)

    init = frozenset(problem.init)
    if h(init) == 0:
        return Plan([], 0)
    parents: dict[frozenset[Atom], tuple[frozenset[Atom] | None, GroundAction | None, int]] = {init: (None, None, 0)}
    counter = itertools.count()
    frontier = [(h(init), next(counter), init)]
    expansions = 0
    truncated = False
    while frontier:
        _, _, state = heapq.heappop(frontier)
        if expansions >= max_expansions:
            raise LimitExceeded(f"expansion limit {max_expansions} reached", expansions, len(parents))
        expansions += 1
        depth = parents[state][2]
        for action in actions:
            if not action.applicable(state):
                continue
            succ = action.apply(state)
            if succ in parents:
                continue
            if depth + 1 > max_plan_length:
                truncated = True
                continue
            parents[succ] = (state, action, depth + 1)
            hs = h(succ)
            if hs == 0:
                steps: list[GroundAction] = []
                cur = succ
                while parents[cur][0] is not None:
                    prev, act, _ = parents[cur]
                    steps.append(act)
                    cur = prev
                steps.reverse()
                return Plan(steps, expansions)
            heapq.heappush(frontier, (hs, next(counter), succ))
    if truncated:
        raise LimitExceeded(f"plan length limit {max_plan_length} reached", expansions, len(parents))
    raise Unsolvable("goal unreachable: search space exhausted", expansions, len(parents))


class Validation(NamedTuple):
    valid: bool
    failed_step: int | None
    reason: str


def validate_plan(domain: PddlDomain, problem: PddlProblem, steps: Iterable) -> Validation:
    """Simulate a plan from the initial state, re-instantiating each step from its schema.

    Steps may be GroundAction objects, ``(name, args)`` pairs, or strings such
    as ``"(lower-heating m1 l3 l2)"``.
    """
    schemas = {a.name: a for a in domain.actions}
    objects = dict(domain.constants)
    objects.update(problem.objects)
    state = set(problem.init)
    for index, step in enumerate(steps):
        if isinstance(step, GroundAction):
            name, args = step.name, tuple(step.args)
        elif isinstance(step, str):
            parts = step.strip().strip("()").split()
            name, args = parts[0].lower(), tuple(p.lower() for p in parts[1:])
        else:
            name, args = step[0], tuple(step[1])
        schema = schemas.get(name)
        if schema is None:
            return Validation(False, index, f"unknown action {name}")
        if len(args) != len(schema.parameters):
            return Validation(False, index, f"{name} expects {len(schema.parameters)} arguments")
        binding = {}
        for (var, t), arg in zip(schema.parameters, args):
            if arg not in objects or not domain.is_subtype(objects[arg], t):
                return Validation(False, index, f"argument {arg} does not fit {var} - {t}")
            binding[var] = arg
        for lit in schema.precondition:
            atom = Atom(lit.predicate, tuple(binding.get(a, a) for a in lit.args))
            if (atom in state) != lit.positive:
                return Validation(False, index, f"precondition {'' if lit.positive else 'not '}{atom} violated")
        for lit in schema.delete:
            state.discard(Atom(lit.predicate, tuple(binding.get(a, a) for a in lit.args)))
        for lit in schema.add:
            state.add(Atom(lit.predicate, tuple(binding.get(a, a) for a in lit.args)))
    for g in problem.goal:
        if (g.atom in state) != g.positive:
            return Validation(False, None, f"goal {g} not satisfied")
    return Validation(True, None, "")
