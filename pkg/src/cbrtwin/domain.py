"""Attribute-class domain models (``.dm`` files).

Grammar::

    model <id> {
      class <id> {
        <id> : (int|float|boolean|string) [range [<num>, <num>]] [unit "<text>"] ;
      }
    }

``//`` starts a comment that runs to the end of the line.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterable, NamedTuple

from .errors import ParseError, ResolutionError
from .lexer import Lexer, quote

PRIMITIVE_TYPES = ("int", "float", "boolean", "string")
NUMERIC_TYPES = ("int", "float")


class AttributePath(NamedTuple):
    cls: str
    attribute: str

    def __str__(self) -> str:
        return f"{self.cls}.{self.attribute}"

    @classmethod
    def parse(cls, dotted: str) -> "AttributePath":
        head, sep, tail = dotted.partition(".")
        if not sep or not head or not tail or "." in tail:
            raise ResolutionError(f"malformed attribute path {dotted!r}")
        return cls(head, tail)


@dataclass(frozen=True)
class Attribute:
    name: str
    type: str
    range: tuple[float, float] | None = None
    unit: str | None = None

    @property
    def numeric(self) -> bool:
        return self.type in NUMERIC_TYPES


@dataclass(frozen=True)
class ClassDef:
    name: str
    attributes: tuple[Attribute, ...]

    def attribute(self, name: str) -> Attribute | None:
        for attr in self.attributes:
            if attr.name == name:
                return attr
        return None


@dataclass(frozen=True)
class AttributeInfo:
    path: str
    type: str
    range: tuple[float, float] | None
    unit: str | None

    @property
    def numeric(self) -> bool:
        return self.type in NUMERIC_TYPES


@dataclass(frozen=True)
class DomainModel:
    name: str
    classes: tuple[ClassDef, ...] = field(default_factory=tuple)

    def cls(self, name: str) -> ClassDef | None:
        for c in self.classes:
            if c.name == name:
                return c
        return None

    def paths(self) -> list[str]:
        return [f"{c.name}.{a.name}" for c in self.classes for a in c.attributes]


def parse_domain_model(source: str, filename: str | None = None) -> DomainModel:
    lx = Lexer(source, filename)
    if lx.peek().kind == "eof":
        raise ParseError("no class definitions", 1, 1, filename)
    lx.expect("model")
    name = lx.expect_ident("model name").text
    lx.expect("{")
    classes: list[ClassDef] = []
    seen: set[str] = set()
    while not lx.at("}"):
        lx.expect("class")
        cname_tok = lx.expect_ident("class name")
        if cname_tok.text in seen:
            raise lx.error(f"duplicate class {cname_tok.text!r}", cname_tok)
        seen.add(cname_tok.text)
        lx.expect("{")
        attrs: list[Attribute] = []
        names: set[str] = set()
        while not lx.at("}"):
            atok = lx.expect_ident("attribute name")
            if atok.text in names:
                raise lx.error(f"duplicate attribute {atok.text!r} in class {cname_tok.text!r}", atok)
            names.add(atok.text)
            lx.expect(":")
            ttok = lx.expect_ident("type")
            if ttok.text not in PRIMITIVE_TYPES:
                raise lx.error(f"unknown type {ttok.text!r}", ttok)
            rng = None
            unit = None
            if lx.at("range"):
                rtok = lx.next()
                lx.expect("[")
                lo = lx.expect_number()
                lx.expect(",")
                hi = lx.expect_number()
                lx.expect("]")
                if ttok.text not in NUMERIC_TYPES:
                    raise lx.error(f"range on non-numeric attribute {atok.text!r}", rtok)
                if not lo < hi:
                    raise lx.error(f"malformed range [{lo}, {hi}]: min must be below max", rtok)
                rng = (lo, hi)
            if lx.accept("unit"):
                unit = lx.expect_string()
            lx.expect(";")
            attrs.append(Attribute(atok.text, ttok.text, rng, unit))
        lx.expect("}")
        classes.append(ClassDef(cname_tok.text, tuple(attrs)))
    lx.expect("}")
    if lx.peek().kind != "eof":
        raise lx.error("trailing input after model")
    if not classes:
        raise ParseError("no class definitions", 1, 1, filename)
    return DomainModel(name, tuple(classes))


def _num(value: float) -> str:
    return repr(value)


def print_domain_model(model: DomainModel) -> str:
    lines = [f"model {model.name} {{"]
    for c in model.classes:
        lines.append(f"  class {c.name} {{")
        for a in c.attributes:
            text = f"    {a.name}: {a.type}"
            if a.range is not None:
                text += f" range [{_num(a.range[0])}, {_num(a.range[1])}]"
            if a.unit is not None:
                text += f" unit {quote(a.unit)}"
            lines.append(text + ";")
        lines.append("  }")
    lines.append("}")
    return "\n".join(lines) + "\n"


def resolve_path(model: DomainModel | Iterable[DomainModel], path: AttributePath | str) -> AttributeInfo:
    """Look up an attribute by ``Class.attribute`` across one or more models."""
    if isinstance(path, str):
        path = AttributePath.parse(path)
    models = [model] if isinstance(model, DomainModel) else list(model)
    for m in models:
        c = m.cls(path.cls)
        if c is None:
            continue
        attr = c.attribute(path.attribute)
        if attr is None:
            raise ResolutionError(f"unknown attribute path {path}: class {path.cls} has no attribute {path.attribute!r}")
        return AttributeInfo(str(path), attr.type, attr.range, attr.unit)
    raise ResolutionError(f"unknown class {path.cls!r}")


@dataclass
class Situation:
    """One production cycle's snapshot: attribute path -> value."""

    cycle_id: int
    values: dict[str, Any]

    def __getitem__(self, path: str) -> Any:
        return self.values[path]

    def __contains__(self, path: object) -> bool:
        return path in self.values

    def with_values(self, **changes: Any) -> "Situation":
        return Situation(self.cycle_id, {**self.values, **changes})


class Vocabulary:
    """Resolution scope built from the domain models a CBL/CSL file imports."""

    def __init__(self, models: Iterable[DomainModel]):
        self.models = list(models)
        self._by_attr: dict[str, list[str]] = {}
        self._classes: dict[str, str] = {}
        for m in self.models:
            for c in m.classes:
                if c.name in self._classes:
                    raise ResolutionError(
                        f"class {c.name!r} defined in both {self._classes[c.name]!r} and {m.name!r}")
                self._classes[c.name] = m.name
                for a in c.attributes:
                    self._by_attr.setdefault(a.name, []).append(f"{c.name}.{a.name}")

    def resolve(self, cls: str | None, attribute: str) -> AttributeInfo:
        if cls is not None:
            return resolve_path(self.models, AttributePath(cls, attribute))
        matches = self._by_attr.get(attribute, [])
        if not matches:
            raise ResolutionError(f"unknown attribute {attribute!r}")
        if len(matches) > 1:
            raise ResolutionError(f"ambiguous attribute {attribute!r}: qualify as one of {', '.join(matches)}")
        return resolve_path(self.models, matches[0])


def select_models(imports: Iterable[str], models: Iterable[DomainModel], lx: Lexer | None = None) -> Vocabulary:
    available = {m.name: m for m in models}
    chosen = []
    for name in imports:
        if name not in available:
            msg = f"imported domain model {name!r} is not loaded"
            if lx is not None:
                raise ResolutionError(msg, 0, 0, lx.filename)
            raise ResolutionError(msg)
        chosen.append(available[name])
    return Vocabulary(chosen)
