"""Tokenizer shared by the domain, case-base and similarity languages.

The lexer is pull-based so that the case-base parser can switch to raw
s-expression scanning after ``pddl goal``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Any

from .errors import ParseError

_SYMBOLS = ("==", "!=", "<=", ">=", "&&", "||", "{", "}", "(", ")", "[", "]",
            ",", ";", ":", ".", "=", "<", ">", "!", "+", "-", "*", "/")

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<annot>//[ \t]*@(?P<annot_body>[^\n]*))
  | (?P<comment>//[^\n]*)
  | (?P<number>\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<sym>==|!=|<=|>=|&&|\|\||[{}()\[\],;:.=<>!+\-*/])
    """,
    re.VERBOSE,
)

_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_\-]*")


@dataclass(frozen=True)
class Token:
    kind: str  # ident | number | string | sym | annot | eof
    text: str
    value: Any
    line: int
    column: int
    offset: int


def unescape(body: str) -> str:
    return re.sub(r"\\(.)", lambda m: {"n": "\n", "t": "\t"}.get(m.group(1), m.group(1)), body)


def quote(text: str) -> str:
    escaped = text.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n").replace("\t", "\\t")
    return f'"{escaped}"'


class Lexer:
    def __init__(self, source: str, filename: str | None = None):
        self.source = source
        self.filename = filename
        self.pos = 0
        self._peeked: Token | None = None

    def _location(self, offset: int) -> tuple[int, int]:
        line = self.source.count("\n", 0, offset) + 1
        column = offset - (self.source.rfind("\n", 0, offset) + 1) + 1
        return line, column

    def error(self, message: str, token: Token | None = None) -> ParseError:
        if token is None:
            token = self.peek()
        return ParseError(message, token.line, token.column, self.filename)

    def _scan(self) -> Token:
        while True:
            if self.pos >= len(self.source):
                line, col = self._location(self.pos)
                return Token("eof", "", None, line, col, self.pos)
            m = _TOKEN_RE.match(self.source, self.pos)
            if m is None:
                line, col = self._location(self.pos)
                raise ParseError(f"unexpected character {self.source[self.pos]!r}", line, col, self.filename)
            start = self.pos
            self.pos = m.end()
            kind = m.lastgroup
            if kind in ("ws", "comment"):
                continue
            line, col = self._location(start)
            text = m.group(0)
            if kind == "annot_body" or m.group("annot") is not None:
                return Token("annot", text, m.group("annot_body").strip(), line, col, start)
            if kind == "number":
                value: Any = float(text) if any(c in text for c in ".eE") else int(text)
                return Token("number", text, value, line, col, start)
            if kind == "string":
                return Token("string", text, unescape(text[1:-1]), line, col, start)
            if kind == "ident":
                return Token("ident", text, text, line, col, start)
            return Token("sym", text, text, line, col, start)

    def peek(self) -> Token:
        if self._peeked is None:
            self._peeked = self._scan()
        return self._peeked

    def next(self) -> Token:
        tok = self.peek()
        self._peeked = None
        return tok

    def at(self, text: str) -> bool:
        tok = self.peek()
        return tok.kind in ("sym", "ident") and tok.text == text

    def accept(self, text: str) -> Token | None:
        if self.at(text):
            return self.next()
        return None

    def expect(self, text: str) -> Token:
        tok = self.peek()
        if not self.at(text):
            shown = tok.text or "end of input"
            raise self.error(f"expected {text!r}, found {shown!r}", tok)
        return self.next()

    def expect_ident(self, what: str = "identifier") -> Token:
        tok = self.peek()
        if tok.kind != "ident":
            raise self.error(f"expected {what}, found {tok.text or 'end of input'!r}", tok)
        return self.next()

    def expect_number(self) -> int | float:
        negative = self.accept("-") is not None
        tok = self.peek()
        if tok.kind != "number":
            raise self.error(f"expected number, found {tok.text or 'end of input'!r}", tok)
        self.next()
        return -tok.value if negative else tok.value

    def expect_string(self) -> str:
        tok = self.peek()
        if tok.kind != "string":
            raise self.error(f"expected string, found {tok.text or 'end of input'!r}", tok)
        return self.next().value

    # raw access for embedded PDDL fragments

    def _rewind_peek(self) -> None:
        if self._peeked is not None:
            self.pos = self._peeked.offset
            self._peeked = None

    def skip_space(self) -> None:
        self._rewind_peek()
        while True:
            m = re.compile(r"[ \t\r\n]+|//[^\n]*").match(self.source, self.pos)
            if not m or m.end() == self.pos:
                return
            self.pos = m.end()

    def raw_name(self) -> str | None:
        """Read a PDDL-style name (hyphens allowed) if one is next."""
        self.skip_space()
        m = _NAME_RE.match(self.source, self.pos)
        if not m:
            return None
        self.pos = m.end()
        return m.group(0)

    def raw_sexpr(self) -> tuple[str, int, int] | None:
        """Read one balanced parenthesised fragment; returns (text, line, column)."""
        self.skip_space()
        if self.pos >= len(self.source) or self.source[self.pos] != "(":
            return None
        start = self.pos
        depth = 0
        while self.pos < len(self.source):
            ch = self.source[self.pos]
            self.pos += 1
            if ch == "(":
                depth += 1
            elif ch == ")":
                depth -= 1
                if depth == 0:
                    line, col = self._location(start)
                    return self.source[start:self.pos], line, col
        line, col = self._location(start)
        raise ParseError("unbalanced parentheses", line, col, self.filename)
