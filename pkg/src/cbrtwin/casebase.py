"""Case-base models (``.cb`` files): parsing, checking and printing.

Example::

    import InjectionMolding;

    casebase InjectionCases {
      case HighNozzleTemperature {
        // @stats applications=0 successes=0
        when ProcessData.nozzleTemperature > 500;
        solution {
          ProcessData.heating = 1;
        }
        yields ProcessData.nozzleTemperature <= 500;
      }
      case DangerousPressure {
        when ProcessData.pressure > 2000;
        fallback pddl goal pressure-control (low-pressure machine);
      }
    }

A case with a ``solution`` block is known, one without is unknown.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Union

from .domain import DomainModel, Vocabulary, select_models
from .errors import ParseError
from .expr import (Arith, BoolExpr, Path, arith_type, assignable, format_arith, format_condition, parse_arith,
                   parse_condition, parse_path)
from .lexer import Lexer, quote
from .pddl.model import GroundLiteral
from .pddl.parser import parse_goal_literals
from .pddl.sexpr import parse_sexprs

_STATS_RE = re.compile(r"stats\s+applications\s*=\s*(\d+)\s+successes\s*=\s*(\d+)\s*$")


@dataclass
class CaseStats:
    applications: int = 0
    successes: int = 0

    def __post_init__(self) -> None:
        if self.applications < 0 or self.successes < 0 or self.successes > self.applications:
            raise ValueError(f"invalid case stats {self.successes}/{self.applications}")

    @property
    def success_rate(self) -> float:
        """Laplace-smoothed success rate, 0.5 for an untried case."""
        return (self.successes + 1) / (self.applications + 2)

    def record(self, success: bool) -> None:
        self.applications += 1
        if success:
            self.successes += 1


@dataclass(frozen=True)
class Assignment:
    target: Path
    value: Arith


@dataclass(frozen=True)
class Call:
    handler: str
    args: tuple[Arith, ...] = ()


SolutionPart = Union[Assignment, Call]


@dataclass(frozen=True)
class Solution:
    parts: tuple[SolutionPart, ...]
    yields: BoolExpr


@dataclass(frozen=True)
class Notify:
    message: str


@dataclass(frozen=True)
class PddlGoal:
    goal: tuple[GroundLiteral, ...]
    domain: str | None = None


FallbackDirective = Union[Notify, PddlGoal]

DEFAULT_FALLBACK = Notify("no applicable case; operator attention required")


@dataclass
class Case:
    name: str
    condition: BoolExpr
    solution: Solution | None = None
    fallback: FallbackDirective | None = None
    stats: CaseStats = field(default_factory=CaseStats)

    @property
    def known(self) -> bool:
        return self.solution is not None

    @property
    def kind(self) -> str:
        return "known" if self.known else "unknown"


@dataclass
class CaseBase:
    name: str
    imports: list[str]
    cases: list[Case] = field(default_factory=list)

    def get(self, name: str) -> Case:
        for case in self.cases:
            if case.name == name:
                return case
        raise KeyError(name)

    def __contains__(self, name: object) -> bool:
        return any(c.name == name for c in self.cases)

    def add(self, case: Case) -> None:
        if case.name in self:
            raise ValueError(f"duplicate case name {case.name!r}")
        self.cases.append(case)

    def known_cases(self) -> list[Case]:
        return [c for c in self.cases if c.known]

    def fresh_name(self, stem: str) -> str:
        if stem not in self:
            return stem
        n = 2
        while f"{stem}_{n}" in self:
            n += 1
        return f"{stem}_{n}"


def parse_case_base(source: str, models: Iterable[DomainModel], filename: str | None = None) -> CaseBase:
    lx = Lexer(source, filename)
    imports: list[str] = []
    while lx.at("import"):
        lx.next()
        imports.append(lx.expect_ident("domain model name").text)
        lx.expect(";")
    header = lx.peek()
    lx.expect("casebase")
    name = lx.expect_ident("case base name").text
    if not imports:
        raise lx.error("case base imports no domain model", header)
    try:
        vocab = select_models(imports, models)
    except ParseError as exc:
        raise ParseError(exc.message, header.line, header.column, filename) from None
    lx.expect("{")
    cb = CaseBase(name, imports)
    while not lx.at("}"):
        tok = lx.peek()
        case = _parse_case(lx, vocab)
        if case.name in cb:
            raise lx.error(f"duplicate case name {case.name!r}", tok)
        cb.cases.append(case)
    lx.expect("}")
    if lx.peek().kind != "eof":
        raise lx.error("trailing input after case base")
    return cb


def _parse_case(lx: Lexer, vocab: Vocabulary) -> Case:
    lx.expect("case")
    name_tok = lx.expect_ident("case name")
    lx.expect("{")
    stats = CaseStats()
    if lx.peek().kind == "annot":
        annot = lx.next()
        m = _STATS_RE.match(annot.value)
        if not m:
            raise lx.error(f"malformed annotation '@{annot.value}'", annot)
        applications, successes = int(m.group(1)), int(m.group(2))
        if successes > applications:
            raise lx.error("successes exceed applications in @stats", annot)
        stats = CaseStats(applications, successes)
    lx.expect("when")
    condition = parse_condition(lx, vocab)
    lx.expect(";")
    solution = None
    fallback = None
    if lx.at("solution"):
        sol_tok = lx.next()
        lx.expect("{")
        parts: list[SolutionPart] = []
        while not lx.at("}"):
            parts.append(_parse_part(lx, vocab))
            lx.expect(";")
        lx.expect("}")
        if not parts:
            raise lx.error("solution must contain at least one part", sol_tok)
        if not lx.at("yields"):
            raise lx.error(f"case {name_tok.text!r}: solution without yields consequence", sol_tok)
        lx.expect("yields")
        yields = parse_condition(lx, vocab)
        lx.expect(";")
        solution = Solution(tuple(parts), yields)
    elif lx.at("yields"):
        raise lx.error(f"case {name_tok.text!r}: yields without solution")
    if lx.at("fallback"):
        lx.next()
        fallback = _parse_fallback(lx)
        lx.expect(";")
    if lx.peek().kind == "annot":
        raise lx.error("@stats annotation must open the case body")
    lx.expect("}")
    return Case(name_tok.text, condition, solution, fallback, stats)


def _parse_part(lx: Lexer, vocab: Vocabulary) -> SolutionPart:
    if lx.at("call"):
        lx.next()
        handler = lx.expect_ident("handler name").text
        lx.expect("(")
        args: list[Arith] = []
        if not lx.at(")"):
            args.append(parse_arith(lx, vocab))
            while lx.accept(","):
                args.append(parse_arith(lx, vocab))
        lx.expect(")")
        return Call(handler, tuple(args))
    start = lx.peek()
    target = parse_path(lx, vocab)
    lx.expect("=")
    value = parse_arith(lx, vocab)
    try:
        vtype = arith_type(value)
    except TypeError as exc:
        raise lx.error(f"type mismatch: {exc}", start) from None
    if not assignable(target.type, vtype):
        raise lx.error(f"type mismatch: cannot assign {vtype} to {target.path} ({target.type})", start)
    return Assignment(target, value)


def _parse_fallback(lx: Lexer) -> FallbackDirective:
    if lx.accept("notify"):
        return Notify(lx.expect_string())
    tok = lx.peek()
    if lx.accept("pddl"):
        lx.expect("goal")
        domain = lx.raw_name()
        fragments = []
        while True:
            frag = lx.raw_sexpr()
            if frag is None:
                break
            fragments.append(frag)
        if not fragments:
            raise lx.error("pddl goal needs at least one literal", tok)
        text, line, col = fragments[0]
        try:
            exprs = parse_sexprs(" ".join(f[0] for f in fragments), lx.filename)
            goal = parse_goal_literals(exprs, lx.filename)
        except ParseError as exc:
            raise ParseError(exc.message, line, col, lx.filename) from None
        return PddlGoal(goal, domain.lower() if domain else None)
    raise lx.error(f"expected 'notify' or 'pddl goal', found {tok.text!r}", tok)


# -- printing --------------------------------------------------------------

def format_part(part: SolutionPart) -> str:
    if isinstance(part, Assignment):
        return f"{part.target.path} = {format_arith(part.value)}"
    return f"call {part.handler}(" + ", ".join(format_arith(a) for a in part.args) + ")"


def format_fallback(fb: FallbackDirective) -> str:
    if isinstance(fb, Notify):
        return f"notify {quote(fb.message)}"
    head = f"pddl goal {fb.domain} " if fb.domain else "pddl goal "
    return head + " ".join(str(g) for g in fb.goal)


def format_case(case: Case, indent: str = "  ") -> str:
    inner = indent * 2
    lines = [f"{indent}case {case.name} {{",
             f"{inner}// @stats applications={case.stats.applications} successes={case.stats.successes}",
             f"{inner}when {format_condition(case.condition)};"]
    if case.solution is not None:
        lines.append(f"{inner}solution {{")
        for part in case.solution.parts:
            lines.append(f"{inner}{indent}{format_part(part)};")
        lines.append(f"{inner}}}")
        lines.append(f"{inner}yields {format_condition(case.solution.yields)};")
    if case.fallback is not None:
        lines.append(f"{inner}fallback {format_fallback(case.fallback)};")
    lines.append(f"{indent}}}")
    return "\n".join(lines)


def print_case_base(cb: CaseBase) -> str:
    out = [f"import {name};" for name in cb.imports]
    if out:
        out.append("")
    out.append(f"casebase {cb.name} {{")
    for i, case in enumerate(cb.cases):
        if i:
            out.append("")
        out.append(format_case(case))
    out.append("}")
    return "\n".join(out) + "\n"
