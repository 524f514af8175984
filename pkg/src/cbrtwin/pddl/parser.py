"""STRIPS-subset PDDL front-end: domains, problems and ground goal literals."""

from __future__ import annotations

from ..errors import ParseError, ResolutionError
from .model import ActionSchema, Atom, GroundLiteral, PddlDomain, PddlProblem, SchemaLiteral
from .sexpr import SExpr, format_sexpr, parse_sexprs


class UnsupportedFeature(ParseError):
    def __init__(self, feature: str, source: str | None = None):
        self.feature = feature
        super().__init__(f"unsupported feature: {feature}", source=source)


_UNSUPPORTED_REQUIREMENTS = {
    ":fluents": "numeric fluents",
    ":numeric-fluents": "numeric fluents",
    ":object-fluents": "object fluents",
    ":durative-actions": "durative actions",
    ":duration-inequalities": "durative actions",
    ":continuous-effects": "continuous effects",
    ":derived-predicates": "derived predicates",
    ":timed-initial-literals": "timed initial literals",
    ":conditional-effects": "conditional effects",
    ":disjunctive-preconditions": "disjunctive preconditions",
    ":existential-preconditions": "quantified preconditions",
    ":universal-preconditions": "quantified preconditions",
    ":quantified-preconditions": "quantified preconditions",
    ":adl": "ADL",
    ":equality": "equality",
    ":preferences": "preferences",
    ":constraints": "constraints",
    ":action-costs": "action costs",
}
_SUPPORTED_REQUIREMENTS = {":strips", ":typing", ":negative-preconditions"}

_UNSUPPORTED_HEADS = {
    "or": "disjunctive preconditions",
    "imply": "disjunctive preconditions",
    "exists": "quantified preconditions",
    "forall": "quantified preconditions",
    "when": "conditional effects",
    "increase": "numeric fluents",
    "decrease": "numeric fluents",
    "assign": "numeric fluents",
    "scale-up": "numeric fluents",
    "scale-down": "numeric fluents",
    "=": "equality",
    "<": "numeric fluents",
    ">": "numeric fluents",
    "<=": "numeric fluents",
    ">=": "numeric fluents",
    "at": "durative actions",
    "over": "durative actions",
}


def _typed_list(items: list[SExpr], what: str, src: str | None) -> list[tuple[str, str]]:
    out: list[tuple[str, str]] = []
    pending: list[str] = []
    i = 0
    while i < len(items):
        item = items[i]
        if not isinstance(item, str):
            raise ParseError(f"malformed {what} list near {format_sexpr(item)}", source=src)
        if item == "-":
            if i + 1 >= len(items) or not isinstance(items[i + 1], str):
                raise ParseError(f"missing type after '-' in {what} list", source=src)
            if not pending:
                raise ParseError(f"type without names in {what} list", source=src)
            out.extend((name, items[i + 1]) for name in pending)
            pending = []
            i += 2
            continue
        pending.append(item)
        i += 1
    out.extend((name, "object") for name in pending)
    return out


def _conjunction(expr: SExpr, what: str, src: str | None) -> list[SExpr]:
    """Flatten ``(and ...)`` nests into a literal list; rejects non-STRIPS heads."""
    if isinstance(expr, str):
        raise ParseError(f"malformed {what}: {expr}", source=src)
    if not expr:
        return []
    head = expr[0]
    if head == "and":
        out: list[SExpr] = []
        for sub in expr[1:]:
            out.extend(_conjunction(sub, what, src))
        return out
    if isinstance(head, str) and head in _UNSUPPORTED_HEADS:
        raise UnsupportedFeature(f"{_UNSUPPORTED_HEADS[head]} ({head} in {what})", src)
    return [expr]


def _literal(expr: SExpr, what: str, src: str | None) -> tuple[str, tuple[str, ...], bool]:
    positive = True
    if isinstance(expr, list) and expr and expr[0] == "not":
        if len(expr) != 2:
            raise ParseError(f"malformed negation in {what}: {format_sexpr(expr)}", source=src)
        expr = expr[1]
        positive = False
        if isinstance(expr, list) and expr and isinstance(expr[0], str) and expr[0] in _UNSUPPORTED_HEADS:
            raise UnsupportedFeature(f"{_UNSUPPORTED_HEADS[expr[0]]} ({expr[0]} in {what})", src)
    if not isinstance(expr, list) or not expr or not all(isinstance(a, str) for a in expr):
        raise ParseError(f"malformed literal in {what}: {format_sexpr(expr)}", source=src)
    return expr[0], tuple(expr[1:]), positive


def _header(exprs: list[SExpr], kind: str, src: str | None) -> tuple[str, list[SExpr]]:
    if len(exprs) != 1 or not isinstance(exprs[0], list) or not exprs[0] or exprs[0][0] != "define":
        raise ParseError(f"expected a single (define ({kind} ...) ...) form", source=src)
    body = exprs[0]
    if len(body) < 2 or not isinstance(body[1], list) or len(body[1]) != 2 or body[1][0] != kind:
        raise ParseError(f"expected ({kind} <name>) after define", source=src)
    return body[1][1], body[2:]


def parse_pddl_domain(source: str, filename: str | None = None) -> PddlDomain:
    name, sections = _header(parse_sexprs(source, filename), "domain", filename)
    types: dict[str, str] = {}
    constants: dict[str, str] = {}
    predicates: dict[str, tuple[str, ...]] = {}
    raw_actions: list[list[SExpr]] = []
    for section in sections:
        if not isinstance(section, list) or not section or not isinstance(section[0], str):
            raise ParseError(f"malformed domain section {format_sexpr(section)}", source=filename)
        key = section[0]
        if key == ":requirements":
            for req in section[1:]:
                if req in _UNSUPPORTED_REQUIREMENTS:
                    raise UnsupportedFeature(_UNSUPPORTED_REQUIREMENTS[req], filename)
                if req not in _SUPPORTED_REQUIREMENTS:
                    raise UnsupportedFeature(f"requirement {req}", filename)
        elif key == ":types":
            for tname, parent in _typed_list(section[1:], "types", filename):
                types[tname] = parent
        elif key == ":constants":
            constants.update(_typed_list(section[1:], "constants", filename))
        elif key == ":predicates":
            for pred in section[1:]:
                if not isinstance(pred, list) or not pred or not isinstance(pred[0], str):
                    raise ParseError(f"malformed predicate {format_sexpr(pred)}", source=filename)
                if pred[0] in predicates:
                    raise ParseError(f"duplicate predicate {pred[0]}", source=filename)
                predicates[pred[0]] = tuple(t for _, t in _typed_list(pred[1:], "predicate", filename))
        elif key == ":functions":
            raise UnsupportedFeature("numeric fluents", filename)
        elif key == ":durative-action":
            raise UnsupportedFeature("durative actions", filename)
        elif key == ":derived":
            raise UnsupportedFeature("derived predicates", filename)
        elif key == ":action":
            raw_actions.append(section)
        else:
            raise UnsupportedFeature(f"domain section {key}", filename)

    for tname, parent in types.items():
        if parent != "object" and parent not in types:
            raise ResolutionError(f"type {tname} has undeclared parent {parent}", source=filename)
    known_types = set(types) | {"object"}
    for pname, ptypes in predicates.items():
        for t in ptypes:
            if t not in known_types:
                raise ResolutionError(f"predicate {pname} uses undeclared type {t}", source=filename)
    for cname, ctype in constants.items():
        if ctype not in known_types:
            raise ResolutionError(f"constant {cname} has undeclared type {ctype}", source=filename)

    domain = PddlDomain(name, types, constants, predicates, ())
    actions = tuple(_parse_action(sec, domain, filename) for sec in raw_actions)
    names = [a.name for a in actions]
    if len(set(names)) != len(names):
        raise ParseError("duplicate action name", source=filename)
    return PddlDomain(name, types, constants, predicates, actions)


def _parse_action(section: list[SExpr], domain: PddlDomain, src: str | None) -> ActionSchema:
    if len(section) < 2 or not isinstance(section[1], str):
        raise ParseError("action without a name", source=src)
    aname = section[1]
    fields: dict[str, SExpr] = {}
    rest = section[2:]
    if len(rest) % 2:
        raise ParseError(f"action {aname}: keyword without value", source=src)
    for key, value in zip(rest[::2], rest[1::2]):
        if key not in (":parameters", ":precondition", ":effect"):
            raise UnsupportedFeature(f"action field {key}", src)
        fields[key] = value
    params_raw = fields.get(":parameters", [])
    if not isinstance(params_raw, list):
        raise ParseError(f"action {aname}: malformed parameters", source=src)
    params = tuple(_typed_list(params_raw, "parameter", src))
    known_types = set(domain.types) | {"object"}
    scope: dict[str, str] = {}
    for var, t in params:
        if not var.startswith("?"):
            raise ParseError(f"action {aname}: parameter {var} must start with '?'", source=src)
        if t not in known_types:
            raise ResolutionError(f"action {aname}: undeclared type {t}", source=src)
        scope[var] = t

    def check(pred: str, args: tuple[str, ...], what: str) -> None:
        if pred not in domain.predicates:
            raise ResolutionError(f"action {aname}: undeclared predicate {pred} in {what}", source=src)
        expected = domain.predicates[pred]
        if len(expected) != len(args):
            raise ParseError(f"action {aname}: {pred} expects {len(expected)} arguments, got {len(args)}", source=src)
        for arg, t in zip(args, expected):
            if arg.startswith("?"):
                if arg not in scope:
                    raise ResolutionError(f"action {aname}: unbound variable {arg}", source=src)
                actual = scope[arg]
            elif arg in domain.constants:
                actual = domain.constants[arg]
            else:
                raise ResolutionError(f"action {aname}: unknown constant {arg}", source=src)
            if not domain.is_subtype(actual, t):
                raise ParseError(f"action {aname}: {arg} of type {actual} does not fit {pred} argument type {t}",
                                 source=src)

    pre: list[SchemaLiteral] = []
    for lit in _conjunction(fields.get(":precondition", []), f"precondition of {aname}", src):
        pred, args, positive = _literal(lit, f"precondition of {aname}", src)
        check(pred, args, "precondition")
        pre.append(SchemaLiteral(pred, args, positive))
    add: list[SchemaLiteral] = []
    delete: list[SchemaLiteral] = []
    for lit in _conjunction(fields.get(":effect", []), f"effect of {aname}", src):
        pred, args, positive = _literal(lit, f"effect of {aname}", src)
        check(pred, args, "effect")
        (add if positive else delete).append(SchemaLiteral(pred, args, positive))
    return ActionSchema(aname, params, tuple(pre), tuple(add), tuple(delete))


def parse_goal_literals(exprs: list[SExpr], src: str | None = None) -> tuple[GroundLiteral, ...]:
    out: list[GroundLiteral] = []
    for expr in exprs:
        for lit in _conjunction(expr, "goal", src):
            pred, args, positive = _literal(lit, "goal", src)
            if any(a.startswith("?") for a in args):
                raise ParseError(f"goal literal {format_sexpr(lit)} is not ground", source=src)
            out.append(GroundLiteral(Atom(pred, args), positive))
    return tuple(out)


def check_ground_atom(atom: Atom, domain: PddlDomain, objects: dict[str, str], what: str,
                      src: str | None = None) -> None:
    if atom.predicate not in domain.predicates:
        raise ResolutionError(f"undeclared predicate {atom.predicate} in {what}", source=src)
    expected = domain.predicates[atom.predicate]
    if len(expected) != len(atom.args):
        raise ParseError(f"{atom} in {what}: expected {len(expected)} arguments", source=src)
    for arg, t in zip(atom.args, expected):
        if arg not in objects:
            raise ResolutionError(f"unknown object {arg} in {what}", source=src)
        if not domain.is_subtype(objects[arg], t):
            raise ParseError(f"type mismatch: {arg} is {objects[arg]}, {atom.predicate} expects {t}", source=src)


def parse_pddl_problem(source: str, domain: PddlDomain, filename: str | None = None,
                       require_goal: bool = True) -> PddlProblem:
    name, sections = _header(parse_sexprs(source, filename), "problem", filename)
    dref = None
    objects: dict[str, str] = dict(domain.constants)
    init: set[Atom] = set()
    goal: tuple[GroundLiteral, ...] | None = None
    init_raw: list[SExpr] = []
    for section in sections:
        if not isinstance(section, list) or not section or not isinstance(section[0], str):
            raise ParseError(f"malformed problem section {format_sexpr(section)}", source=filename)
        key = section[0]
        if key == ":domain":
            dref = section[1] if len(section) == 2 else None
        elif key == ":objects":
            for oname, otype in _typed_list(section[1:], "objects", filename):
                if otype != "object" and otype not in domain.types:
                    raise ResolutionError(f"object {oname} has undeclared type {otype}", source=filename)
                objects[oname] = otype
        elif key == ":init":
            init_raw.extend(section[1:])
        elif key == ":goal":
            if len(section) != 2:
                raise ParseError("goal must be a single formula", source=filename)
            goal = parse_goal_literals([section[1]], filename)
        elif key == ":requirements":
            continue
        elif key == ":metric":
            raise UnsupportedFeature("plan metrics", filename)
        else:
            raise UnsupportedFeature(f"problem section {key}", filename)
    if dref != domain.name:
        raise ResolutionError(f"problem {name} refers to domain {dref}, not {domain.name}", source=filename)
    for expr in init_raw:
        pred, args, positive = _literal(expr, "init", filename)
        if not positive:
            raise ParseError("negative literal in init", source=filename)
        atom = Atom(pred, args)
        check_ground_atom(atom, domain, objects, "init", filename)
        init.add(atom)
    if goal is None:
        if require_goal:
            raise ParseError("problem has no goal", source=filename)
        goal = ()
    for lit in goal:
        check_ground_atom(lit.atom, domain, objects, "goal", filename)
    return PddlProblem(name, domain.name, objects, frozenset(init), goal)


def format_problem(problem: PddlProblem) -> str:
    objs = " ".join(f"{o} - {t}" for o, t in sorted(problem.objects.items()))
    init = "\n    ".join(str(a) for a in sorted(problem.init))
    goal = " ".join(str(g) for g in problem.goal)
    return (f"(define (problem {problem.name})\n  (:domain {problem.domain})\n  (:objects {objs})\n"
            f"  (:init\n    {init})\n  (:goal (and {goal})))\n")
