"""Named runtime extensions: handcrafted similarity metrics and solution handlers.

Manual metrics declared in a similarity model and ``call`` parts in a case
base are bound to these registries by name when the twin starts.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable

from .errors import PluginError

LocalFn = Callable[[Any, Any, "tuple[float, float] | None"], float]
GlobalFn = Callable[[dict, dict, dict], float]
HandlerFn = Callable[..., "dict[str, Any] | None"]


@dataclass(frozen=True)
class Plugin:
    name: str
    fn: Callable
    reentrant: bool = True


class Registry:
    def __init__(self) -> None:
        self.metrics: dict[str, Plugin] = {}
        self.global_metrics: dict[str, Plugin] = {}
        self.handlers: dict[str, Plugin] = {}

    def register_metric(self, name: str, fn: LocalFn, reentrant: bool = True) -> None:
        """``fn(current, reference, range) -> distance``; result is clamped to [0, 1]."""
        self.metrics[name] = Plugin(name, fn, reentrant)

    def register_global(self, name: str, fn: GlobalFn, reentrant: bool = True) -> None:
        """``fn(situation_values, reference, local_scores) -> distance``."""
        self.global_metrics[name] = Plugin(name, fn, reentrant)

    def register_handler(self, name: str, fn: HandlerFn) -> None:
        """``fn(situation_values, *args)`` may return extra ``{path: value}`` writes."""
        self.handlers[name] = Plugin(name, fn, False)

    def metric(self, name: str) -> Plugin:
        try:
            return self.metrics[name]
        except KeyError:
            raise PluginError(f"manual similarity metric {name!r} is not registered") from None

    def global_metric(self, name: str) -> Plugin:
        try:
            return self.global_metrics[name]
        except KeyError:
            raise PluginError(f"manual global similarity {name!r} is not registered") from None

    def handler(self, name: str) -> Plugin:
        try:
            return self.handlers[name]
        except KeyError:
            raise PluginError(f"solution handler {name!r} is not registered") from None

    def copy(self) -> "Registry":
        other = Registry()
        other.metrics.update(self.metrics)
        other.global_metrics.update(self.global_metrics)
        other.handlers.update(self.handlers)
        return other


# Pressure above this line is dangerous for the mold (bar).
PRESSURE_DANGER_LINE = 2000.0


def pressure_band(current: float, reference: float, rng: tuple[float, float] | None) -> float:
    """Handcrafted pressure metric: range-normalized gap plus 0.5 when the two
    values sit on different sides of the danger line."""
    lo, hi = rng if rng is not None else (0.0, 2500.0)
    distance = abs(current - reference) / (hi - lo)
    if (current >= PRESSURE_DANGER_LINE) != (reference >= PRESSURE_DANGER_LINE):
        distance += 0.5
    return min(1.0, distance)


def default_registry() -> Registry:
    reg = Registry()
    reg.register_metric("pressureBand", pressure_band)
    return reg
