"""Similarity models (``.cs`` files) and distance-like scoring in [0, 1].

Example::

    import InjectionMolding;

    similarity InjectionSimilarity {
      local ProcessData.nozzleTemperature absolute;
      local ProcessData.pressure manual pressureBand;
      local PhaseData.dosingTime squared range [0, 20];
      global weighted {
        ProcessData.nozzleTemperature weight 0.5;
        ProcessData.pressure weight 0.5;
        PhaseData.dosingTime weight 0.2;
      }
    }

A score of 0 means identical; larger is less similar.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from decimal import Decimal
from fractions import Fraction
from typing import Any, Iterable, Mapping

from .casebase import Case
from .domain import DomainModel, Situation, select_models
from .errors import ExtractError, MetricError, ParseError, PluginError
from .expr import And, BoolExpr, Compare, parse_path
from .lexer import Lexer
from .plugins import Registry, default_registry

LOCAL_KINDS = ("absolute", "squared", "manual")


class NotComparable(MetricError):
    """A reference point shares no weighted attribute with the similarity model."""


@dataclass(frozen=True)
class LocalMetric:
    path: str
    kind: str
    plugin: str | None = None
    range: tuple[float, float] | None = None
    range_override: bool = False
    type: str = "float"


@dataclass
class SimilaritySpec:
    name: str
    imports: list[str]
    locals: dict[str, LocalMetric]
    global_kind: str = "weighted"
    declared_weights: dict[str, Decimal] = field(default_factory=dict)
    global_plugin: str | None = None
    weights: dict[str, Fraction] = field(init=False)

    def __post_init__(self) -> None:
        for path, w in self.declared_weights.items():
            if w <= 0:
                raise ValueError(f"weight for {path} must be positive")
            if path not in self.locals:
                raise ValueError(f"weighted attribute {path} has no local metric")
        total = sum((Fraction(w) for w in self.declared_weights.values()), Fraction(0))
        self.weights = {p: Fraction(w) / total for p, w in self.declared_weights.items()} if total else {}
        self._subset_cache: dict[frozenset, list[tuple[str, float]]] = {}

    def subset_weights(self, paths: Iterable[str]) -> list[tuple[str, float]]:
        """Weights restricted to ``paths`` and renormalized to sum to 1, sorted by path."""
        key = frozenset(p for p in paths if p in self.weights)
        cached = self._subset_cache.get(key)
        if cached is None:
            total = sum((self.weights[p] for p in key), Fraction(0))
            cached = [(p, float(self.weights[p] / total)) for p in sorted(key)] if total else []
            self._subset_cache[key] = cached
        return cached

    def manual_plugins(self) -> list[str]:
        return [m.plugin for m in self.locals.values() if m.kind == "manual"]

    def bind(self, registry: Registry) -> None:
        """Fail fast if a manual metric is not registered."""
        for name in self.manual_plugins():
            registry.metric(name)
        if self.global_kind == "manual":
            registry.global_metric(self.global_plugin)


def parse_similarity_spec(source: str, models: Iterable[DomainModel], filename: str | None = None) -> SimilaritySpec:
    lx = Lexer(source, filename)
    imports: list[str] = []
    while lx.at("import"):
        lx.next()
        imports.append(lx.expect_ident("domain model name").text)
        lx.expect(";")
    header = lx.peek()
    lx.expect("similarity")
    name = lx.expect_ident("similarity model name").text
    if not imports:
        raise lx.error("similarity model imports no domain model", header)
    try:
        vocab = select_models(imports, models)
    except ParseError as exc:
        raise ParseError(exc.message, header.line, header.column, filename) from None
    lx.expect("{")
    locals_: dict[str, LocalMetric] = {}
    weights: dict[str, Decimal] = {}
    global_kind = None
    global_plugin = None
    while not lx.at("}"):
        if lx.at("local"):
            ltok = lx.next()
            path = parse_path(lx, vocab)
            if path.path in locals_:
                raise lx.error(f"duplicate local metric for {path.path}", ltok)
            kind_tok = lx.expect_ident("metric kind")
            if kind_tok.text not in LOCAL_KINDS:
                raise lx.error(f"unknown metric kind {kind_tok.text!r}", kind_tok)
            plugin = lx.expect_ident("plugin name").text if kind_tok.text == "manual" else None
            info = vocab.resolve(*path.path.split(".", 1))
            rng = info.range
            override = False
            if lx.accept("range"):
                lx.expect("[")
                lo = lx.expect_number()
                lx.expect(",")
                hi = lx.expect_number()
                rtok = lx.expect("]")
                if not lo < hi:
                    raise lx.error(f"malformed range [{lo}, {hi}]", rtok)
                rng = (lo, hi)
                override = True
            if kind_tok.text in ("absolute", "squared"):
                if not info.numeric:
                    raise lx.error(f"{kind_tok.text} metric needs a numeric attribute, {path.path} is {info.type}",
                                   kind_tok)
                if rng is None:
                    raise lx.error(f"{kind_tok.text} metric on {path.path} needs a range "
                                   "(declare one in the domain model or here)", kind_tok)
            lx.expect(";")
            locals_[path.path] = LocalMetric(path.path, kind_tok.text, plugin, rng, override, info.type)
        elif lx.at("global"):
            gtok = lx.next()
            if global_kind is not None:
                raise lx.error("only one global metric is allowed", gtok)
            if lx.accept("weighted"):
                global_kind = "weighted"
                lx.expect("{")
                while not lx.at("}"):
                    wpath = parse_path(lx, vocab)
                    lx.expect("weight")
                    neg = lx.accept("-")
                    ntok = lx.peek()
                    if ntok.kind != "number":
                        raise lx.error("expected weight value", ntok)
                    lx.next()
                    value = Decimal(ntok.text)
                    if neg or value <= 0:
                        raise lx.error(f"weight for {wpath.path} must be positive", ntok)
                    if wpath.path in weights:
                        raise lx.error(f"duplicate weight for {wpath.path}", ntok)
                    weights[wpath.path] = value
                    lx.expect(";")
                rbrace = lx.expect("}")
                if not weights:
                    raise lx.error("global weighted metric needs at least one weight", rbrace)
            elif lx.accept("manual"):
                global_kind = "manual"
                global_plugin = lx.expect_ident("plugin name").text
                lx.expect(";")
            else:
                raise lx.error("expected 'weighted' or 'manual' after 'global'")
        else:
            raise lx.error(f"expected 'local' or 'global', found {lx.peek().text!r}")
    end = lx.expect("}")
    if lx.peek().kind != "eof":
        raise lx.error("trailing input after similarity model")
    if global_kind is None:
        raise lx.error("similarity model declares no global metric", end)
    for path in weights:
        if path not in locals_:
            raise ParseError(f"weighted attribute {path} has no local metric", end.line, end.column, filename)
    return SimilaritySpec(name, imports, locals_, global_kind, weights, global_plugin)


def print_similarity_spec(spec: SimilaritySpec) -> str:
    out = [f"import {i};" for i in spec.imports] + ["", f"similarity {spec.name} {{"]
    for m in spec.locals.values():
        text = f"  local {m.path} {m.kind}"
        if m.plugin:
            text += f" {m.plugin}"
        if m.range_override:
            text += f" range [{m.range[0]!r}, {m.range[1]!r}]"
        out.append(text + ";")
    if spec.global_kind == "manual":
        out.append(f"  global manual {spec.global_plugin};")
    else:
        out.append("  global weighted {")
        for p, w in spec.declared_weights.items():
            out.append(f"    {p} weight {w};")
        out.append("  }")
    out.append("}")
    return "\n".join(out) + "\n"


# -- reference extraction --------------------------------------------------

def _conjuncts(expr: BoolExpr) -> list[Compare]:
    if isinstance(expr, Compare):
        return [expr]
    if isinstance(expr, And):
        out: list[Compare] = []
        for item in expr.items:
            out.extend(_conjuncts(item))
        return out
    raise ExtractError("condition not reference-extractable (disjunction or negation)")


def extract_reference(case: Case | BoolExpr) -> dict[str, Any]:
    """Turn a conjunctive condition into one reference value per attribute.

    ``== v`` gives v; a lower and an upper bound give their midpoint; a
    single bound gives the bound itself. Several bounds on the same side
    keep the tightest one.
    """
    condition = case.condition if isinstance(case, Case) else case
    lower: dict[str, Any] = {}
    upper: dict[str, Any] = {}
    equal: dict[str, Any] = {}
    order: list[str] = []
    for cmp in _conjuncts(condition):
        path, value = cmp.left.path, cmp.right.value
        if path not in order:
            order.append(path)
        if cmp.op == "==":
            if path in equal and equal[path] != value:
                raise ExtractError(f"contradictory equalities on {path}")
            equal[path] = value
        elif cmp.op == "!=":
            raise ExtractError(f"condition not reference-extractable ('!=' on {path})")
        elif cmp.op in (">", ">="):
            lower[path] = value if path not in lower else max(lower[path], value)
        else:
            upper[path] = value if path not in upper else min(upper[path], value)
    ref: dict[str, Any] = {}
    for path in order:
        if path in equal:
            ref[path] = equal[path]
        elif path in lower and path in upper:
            ref[path] = (lower[path] + upper[path]) / 2
        elif path in lower:
            ref[path] = lower[path]
        else:
            ref[path] = upper[path]
    return ref


# -- scoring ---------------------------------------------------------------

def _clamp(value: float) -> float:
    if value != value:  # NaN
        raise MetricError("similarity metric returned NaN")
    return 0.0 if value < 0.0 else 1.0 if value > 1.0 else float(value)


def local_similarity(metric: LocalMetric, current: Any, reference: Any, registry: Registry | None = None) -> float:
    if metric.kind in ("absolute", "squared"):
        lo, hi = metric.range
        if current == reference:
            return 0.0
        gap = abs(current - reference) / (hi - lo)
        return min(1.0, gap if metric.kind == "absolute" else gap * gap)
    plugin = (registry or default_registry()).metric(metric.plugin)
    try:
        result = plugin.fn(current, reference, metric.range)
    except PluginError:
        raise
    except Exception as exc:
        raise MetricError(f"manual metric {metric.plugin!r} failed on {metric.path}: {exc}") from exc
    return _clamp(result)


def global_similarity(spec: SimilaritySpec, situation: Situation | Mapping[str, Any], reference: Mapping[str, Any],
                      registry: Registry | None = None) -> float:
    """Weighted combination of the local scores of the referenced attributes.

    Only weighted attributes that the reference defines take part; their
    weights are renormalized to sum to 1 over that subset. Attributes that
    are referenced but unweighted contribute nothing.
    """
    values = situation.values if isinstance(situation, Situation) else situation
    if spec.global_kind == "manual":
        locals_ = {}
        for path in reference:
            if path in spec.locals:
                locals_[path] = local_similarity(spec.locals[path], _current(values, path), reference[path], registry)
        plugin = (registry or default_registry()).global_metric(spec.global_plugin)
        return _clamp(plugin.fn(values, dict(reference), locals_))
    weights = spec.subset_weights(reference)
    if not weights:
        raise NotComparable("reference shares no weighted attribute with the similarity model")
    total = 0.0
    for path, w in weights:
        total += w * local_similarity(spec.locals[path], _current(values, path), reference[path], registry)
    return min(1.0, total)


def _current(values: Mapping[str, Any], path: str) -> Any:
    try:
        return values[path]
    except KeyError:
        raise MetricError(f"attribute {path} missing from situation") from None


def plugins_reentrant(spec: SimilaritySpec, registry: Registry) -> bool:
    names = spec.manual_plugins()
    if any(not registry.metric(n).reentrant for n in names):
        return False
    if spec.global_kind == "manual" and not registry.global_metric(spec.global_plugin).reentrant:
        return False
    return True
