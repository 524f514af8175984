"""Minimal s-expression reader for PDDL text."""

from __future__ import annotations

import re
from typing import Union

from ..errors import ParseError

SExpr = Union[str, list["SExpr"]]

_TOKEN = re.compile(r"\s+|;[^\n]*|\(|\)|[^\s();]+")


def tokenize(text: str, filename: str | None = None) -> list[tuple[str, int, int]]:
    out = []
    line, line_start = 1, 0
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:  # pragma: no cover - the pattern matches any character class
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1, filename)
        tok = m.group(0)
        if not tok[0].isspace() and tok[0] != ";":
            out.append((tok, line, pos - line_start + 1))
        newlines = tok.count("\n")
        if newlines:
            line += newlines
            line_start = pos + tok.rfind("\n") + 1
        pos = m.end()
    return out


def parse_sexprs(text: str, filename: str | None = None) -> list[SExpr]:
    """Parse every top-level expression; atoms are lower-cased."""
    tokens = tokenize(text, filename)
    stack: list[list[SExpr]] = [[]]
    opened: list[tuple[int, int]] = []
    for tok, line, col in tokens:
        if tok == "(":
            stack.append([])
            opened.append((line, col))
        elif tok == ")":
            if len(stack) == 1:
                raise ParseError("unbalanced ')'", line, col, filename)
            done = stack.pop()
            opened.pop()
            stack[-1].append(done)
        else:
            stack[-1].append(tok.lower())
    if len(stack) != 1:
        line, col = opened[-1]
        raise ParseError("unbalanced '(' (missing ')')", line, col, filename)
    return stack[0]


def format_sexpr(expr: SExpr) -> str:
    if isinstance(expr, str):
        return expr
    return "(" + " ".join(format_sexpr(e) for e in expr) + ")"
