"""Boolean conditions and assignment arithmetic over attribute paths.

Conditions are comparisons ``path op literal`` combined with ``&&``, ``||``,
``!`` and parentheses. Assignment right-hand sides are arithmetic over
numeric literals and paths (``+ - * /``, unary minus).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Mapping, Union

from .domain import NUMERIC_TYPES, Situation, Vocabulary
from .errors import EvalError, ResolutionError
from .lexer import Lexer, quote

COMPARE_OPS = ("<", "<=", ">", ">=", "==", "!=")


@dataclass(frozen=True)
class Literal:
    value: Any
    type: str  # int | float | boolean | string

    @classmethod
    def of(cls, value: Any) -> "Literal":
        if isinstance(value, bool):
            return cls(value, "boolean")
        if isinstance(value, int):
            return cls(value, "int")
        if isinstance(value, float):
            return cls(value, "float")
        if isinstance(value, str):
            return cls(value, "string")
        raise TypeError(f"unsupported literal {value!r}")


@dataclass(frozen=True)
class Path:
    path: str
    type: str


@dataclass(frozen=True)
class Compare:
    op: str
    left: Path
    right: Literal


@dataclass(frozen=True)
class And:
    items: tuple["BoolExpr", ...]


@dataclass(frozen=True)
class Or:
    items: tuple["BoolExpr", ...]


@dataclass(frozen=True)
class Not:
    operand: "BoolExpr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Arith"
    right: "Arith"


@dataclass(frozen=True)
class Neg:
    operand: "Arith"


BoolExpr = Union[Compare, And, Or, Not]
Arith = Union[Literal, Path, BinOp, Neg]


# -- parsing ---------------------------------------------------------------

def parse_path(lx: Lexer, vocab: Vocabulary) -> Path:
    first = lx.expect_ident("attribute path")
    cls = None
    attr = first.text
    if lx.accept("."):
        cls = first.text
        attr = lx.expect_ident("attribute name").text
    try:
        info = vocab.resolve(cls, attr)
    except ResolutionError as exc:
        raise ResolutionError(exc.message, first.line, first.column, lx.filename) from None
    return Path(info.path, info.type)


def parse_literal(lx: Lexer) -> Literal:
    tok = lx.peek()
    if lx.at("-") or tok.kind == "number":
        value = lx.expect_number()
        return Literal.of(value)
    if tok.kind == "string":
        return Literal(lx.next().value, "string")
    if tok.kind == "ident" and tok.text in ("true", "false"):
        lx.next()
        return Literal(tok.text == "true", "boolean")
    raise lx.error(f"expected literal, found {tok.text or 'end of input'!r}", tok)


def _compatible(path_type: str, lit_type: str) -> bool:
    if path_type in NUMERIC_TYPES:
        return lit_type in NUMERIC_TYPES
    return path_type == lit_type


def parse_condition(lx: Lexer, vocab: Vocabulary) -> BoolExpr:
    return _parse_or(lx, vocab)


def _parse_or(lx: Lexer, vocab: Vocabulary) -> BoolExpr:
    items = [_parse_and(lx, vocab)]
    while lx.accept("||"):
        items.append(_parse_and(lx, vocab))
    return items[0] if len(items) == 1 else Or(tuple(items))


def _parse_and(lx: Lexer, vocab: Vocabulary) -> BoolExpr:
    items = [_parse_unary(lx, vocab)]
    while lx.accept("&&"):
        items.append(_parse_unary(lx, vocab))
    return items[0] if len(items) == 1 else And(tuple(items))


def _parse_unary(lx: Lexer, vocab: Vocabulary) -> BoolExpr:
    if lx.accept("!"):
        return Not(_parse_unary(lx, vocab))
    if lx.accept("("):
        inner = _parse_or(lx, vocab)
        lx.expect(")")
        return inner
    start = lx.peek()
    path = parse_path(lx, vocab)
    op_tok = lx.peek()
    if op_tok.kind != "sym" or op_tok.text not in COMPARE_OPS:
        raise lx.error(f"expected comparison operator after {path.path}, found {op_tok.text!r}", op_tok)
    lx.next()
    lit = parse_literal(lx)
    if not _compatible(path.type, lit.type):
        raise lx.error(f"type mismatch: {path.path} is {path.type}, literal is {lit.type}", start)
    if op_tok.text not in ("==", "!=") and path.type not in NUMERIC_TYPES:
        raise lx.error(f"type mismatch: operator {op_tok.text} needs a numeric attribute, {path.path} is {path.type}", start)
    return Compare(op_tok.text, path, lit)


def parse_arith(lx: Lexer, vocab: Vocabulary) -> Arith:
    left = _parse_term(lx, vocab)
    while lx.at("+") or lx.at("-"):
        op = lx.next().text
        left = BinOp(op, left, _parse_term(lx, vocab))
    return left


def _parse_term(lx: Lexer, vocab: Vocabulary) -> Arith:
    left = _parse_factor(lx, vocab)
    while lx.at("*") or lx.at("/"):
        op = lx.next().text
        left = BinOp(op, left, _parse_factor(lx, vocab))
    return left


def _parse_factor(lx: Lexer, vocab: Vocabulary) -> Arith:
    tok = lx.peek()
    if lx.at("-"):
        lx.next()
        if lx.peek().kind == "number":
            return Literal.of(-lx.next().value)
        return Neg(_parse_factor(lx, vocab))
    if lx.accept("("):
        inner = parse_arith(lx, vocab)
        lx.expect(")")
        return inner
    if tok.kind in ("number", "string") or (tok.kind == "ident" and tok.text in ("true", "false")):
        return parse_literal(lx)
    if tok.kind == "ident":
        return parse_path(lx, vocab)
    raise lx.error(f"expected expression, found {tok.text or 'end of input'!r}", tok)


def arith_type(expr: Arith) -> str:
    """Static type of an arithmetic expression; raises TypeError on misuse."""
    if isinstance(expr, (Literal, Path)):
        return expr.type
    if isinstance(expr, Neg):
        t = arith_type(expr.operand)
        if t not in NUMERIC_TYPES:
            raise TypeError(f"unary minus on {t}")
        return t
    lt, rt = arith_type(expr.left), arith_type(expr.right)
    if lt not in NUMERIC_TYPES or rt not in NUMERIC_TYPES:
        raise TypeError(f"arithmetic on {lt} and {rt}")
    if expr.op == "/" or "float" in (lt, rt):
        return "float"
    return "int"


def assignable(target_type: str, value_type: str) -> bool:
    if target_type == "float":
        return value_type in NUMERIC_TYPES
    return target_type == value_type


# -- printing --------------------------------------------------------------

def format_literal(lit: Literal) -> str:
    if lit.type == "boolean":
        return "true" if lit.value else "false"
    if lit.type == "string":
        return quote(lit.value)
    if lit.type == "float":
        return repr(float(lit.value))
    return str(int(lit.value))


def format_condition(expr: BoolExpr) -> str:
    if isinstance(expr, Compare):
        return f"{expr.left.path} {expr.op} {format_literal(expr.right)}"
    if isinstance(expr, Not):
        return f"!({format_condition(expr.operand)})"
    if isinstance(expr, And):
        return " && ".join(
            f"({format_condition(i)})" if isinstance(i, (And, Or)) else format_condition(i) for i in expr.items)
    if isinstance(expr, Or):
        return " || ".join(
            f"({format_condition(i)})" if isinstance(i, Or) else format_condition(i) for i in expr.items)
    raise TypeError(f"not a condition: {expr!r}")


_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def format_arith(expr: Arith) -> str:
    if isinstance(expr, Literal):
        return format_literal(expr)
    if isinstance(expr, Path):
        return expr.path
    if isinstance(expr, Neg):
        return f"-({format_arith(expr.operand)})"
    prec = _PREC[expr.op]
    left = format_arith(expr.left)
    right = format_arith(expr.right)
    if isinstance(expr.left, BinOp) and _PREC[expr.left.op] < prec:
        left = f"({left})"
    if isinstance(expr.right, BinOp) and _PREC[expr.right.op] <= prec:
        right = f"({right})"
    return f"{left} {expr.op} {right}"


# -- evaluation ------------------------------------------------------------

def _values(obj: Any) -> Mapping[str, Any]:
    return obj.values if isinstance(obj, Situation) else obj


def _lookup(path: Path, values: Mapping[str, Any]) -> Any:
    try:
        value = values[path.path]
    except KeyError:
        raise EvalError(f"attribute {path.path} missing from situation") from None
    if path.type in NUMERIC_TYPES:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise EvalError(f"type mismatch: {path.path} expected {path.type}, got {value!r}")
    elif path.type == "boolean" and not isinstance(value, bool):
        raise EvalError(f"type mismatch: {path.path} expected boolean, got {value!r}")
    elif path.type == "string" and not isinstance(value, str):
        raise EvalError(f"type mismatch: {path.path} expected string, got {value!r}")
    return value


def _compare(op: str, a: Any, b: Any) -> bool:
    if op == "<":
        return a < b
    if op == "<=":
        return a <= b
    if op == ">":
        return a > b
    if op == ">=":
        return a >= b
    if op == "==":
        return a == b
    return a != b


def eval_condition(expr: BoolExpr, values: Mapping[str, Any]) -> bool:
    """Evaluate a condition against a situation (or any path -> value mapping)."""
    values = _values(values)
    if isinstance(expr, Compare):
        return _compare(expr.op, _lookup(expr.left, values), expr.right.value)
    if isinstance(expr, And):
        return all(eval_condition(i, values) for i in expr.items)
    if isinstance(expr, Or):
        return any(eval_condition(i, values) for i in expr.items)
    if isinstance(expr, Not):
        return not eval_condition(expr.operand, values)
    raise EvalError(f"not a condition: {expr!r}")


def eval_arith(expr: Arith, values: Mapping[str, Any]) -> Any:
    values = _values(values)
    if isinstance(expr, Literal):
        return expr.value
    if isinstance(expr, Path):
        return _lookup(expr, values)
    if isinstance(expr, Neg):
        return -eval_arith(expr.operand, values)
    a = eval_arith(expr.left, values)
    b = eval_arith(expr.right, values)
    if expr.op == "+":
        return a + b
    if expr.op == "-":
        return a - b
    if expr.op == "*":
        return a * b
    if b == 0:
        raise EvalError("division by zero")
    result = a / b
    if not math.isfinite(result):
        raise EvalError("non-finite arithmetic result")
    return result


def condition_paths(expr: BoolExpr) -> list[str]:
    """Attribute paths referenced by a condition, in first-occurrence order."""
    out: list[str] = []

    def walk(e: BoolExpr) -> None:
        if isinstance(e, Compare):
            if e.left.path not in out:
                out.append(e.left.path)
        elif isinstance(e, (And, Or)):
            for i in e.items:
                walk(i)
        elif isinstance(e, Not):
            walk(e.operand)

    walk(expr)
    return out


def arith_paths(expr: Arith) -> list[str]:
    if isinstance(expr, Path):
        return [expr.path]
    if isinstance(expr, Neg):
        return arith_paths(expr.operand)
    if isinstance(expr, BinOp):
        return arith_paths(expr.left) + arith_paths(expr.right)
    return []
