"""Deterministic first-order injection molding machine.

The dynamics and their coefficients are documented in the bundled
``sim_constants.cfg``; see that file for the equations.
"""

from __future__ import annotations

import configparser
import logging
import random
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Any, Iterable, Mapping

from ..domain import Situation
from .port import Ack

log = logging.getLogger(__name__)

# Machine settings and their physical bounds. Writes outside are clamped.
SETTINGS: dict[str, tuple[float, float]] = {
    "dosingTime": (0.0, 20.0),
    "cylinderHeating": (1, 5),
    "injectionFlow": (0.0, 100.0),
    "switchOverVolume": (0.0, 60.0),
    "backPressure": (0.0, 200.0),
}
INT_SETTINGS = {"cylinderHeating"}

# Writable attribute paths -> setting. ProcessData.heating drives the same heater bands.
WRITABLE = {f"PhaseData.{name}": name for name in SETTINGS}
WRITABLE["ProcessData.heating"] = "cylinderHeating"

DEFAULT_CONFIG = {
    "dosingTime": 8.0,
    "cylinderHeating": 3,
    "injectionFlow": 45.0,
    "switchOverVolume": 22.0,
    "backPressure": 60.0,
}


def load_constants(overrides: Mapping[str, Any] | None = None, text: str | None = None) -> dict[str, float]:
    if text is None:
        text = resources.files("cbrtwin.data").joinpath("sim_constants.cfg").read_text(encoding="utf-8")
    cp = configparser.ConfigParser()
    cp.optionxform = str
    cp.read_string(text)
    constants = {k: float(v) for k, v in cp["constants"].items()}
    for key, value in (overrides or {}).items():
        if key not in constants:
            raise KeyError(f"unknown simulator constant {key!r}")
        constants[key] = float(value)
    return constants


def clamp_setting(name: str, value: Any) -> int | float:
    lo, hi = SETTINGS[name]
    v = float(value)
    if name in INT_SETTINGS:
        v = round(v)
    if v < lo or v > hi:
        log.warning("setting %s=%s outside [%s, %s]; clamped", name, value, lo, hi)
        v = min(max(v, lo), hi)
    return int(v) if name in INT_SETTINGS else float(v)


def setpoint(heating: float, c: Mapping[str, float]) -> float:
    return c["temp_base"] + c["temp_per_level"] * heating


@dataclass(frozen=True)
class SimState:
    config: dict[str, int | float]
    barrel_temp: float
    wear: float = 0.0
    cycle: int = 0
    seed: int = 0
    constants: dict[str, float] = field(default_factory=load_constants)

    @classmethod
    def initial(cls, config: Mapping[str, Any] | None = None, seed: int = 0,
                constants: Mapping[str, float] | None = None, barrel_temp: float | None = None,
                wear: float = 0.0) -> "SimState":
        """Start at the thermal steady state of the initial heating level unless told otherwise."""
        merged = dict(DEFAULT_CONFIG)
        for key, value in (config or {}).items():
            if key not in SETTINGS:
                raise KeyError(f"unknown machine setting {key!r}")
            merged[key] = value
        cfg = {k: clamp_setting(k, v) for k, v in merged.items()}
        c = dict(constants) if constants is not None else load_constants()
        temp = barrel_temp if barrel_temp is not None else setpoint(cfg["cylinderHeating"], c)
        return cls(cfg, float(temp), wear, 0, seed, c)


def sim_step(state: SimState) -> tuple[SimState, Situation]:
    """Advance one production cycle under ``state.config``."""
    c = state.constants
    cfg = state.config
    cycle = state.cycle + 1
    barrel = state.barrel_temp + c["alpha"] * (setpoint(cfg["cylinderHeating"], c) - state.barrel_temp)
    wear = state.wear + c["wear_rate"]
    flow = cfg["injectionFlow"]
    bp = cfg["backPressure"]
    dosing = cfg["dosingTime"]
    sov = cfg["switchOverVolume"]

    nozzle = barrel + c["friction"] * flow
    pressure = c["pressure_base"] + c["pressure_per_flow"] * flow + c["pressure_per_back"] * bp
    efficiency = min(1.0, c["back_efficiency_base"] + bp / c["back_efficiency_scale"])
    dosed = c["dose_rate"] * dosing * efficiency * max(0.0, 1.0 - wear)
    injected = min(sov * min(1.0, flow / c["flow_saturation"]), dosed, c["mold_volume"])
    fill = injected / c["mold_volume"]
    cushion = max(0.0, dosed - injected)
    cycle_time = c["cycle_base"] + dosing + sov / max(flow, 1.0)

    if c["noise"]:
        rng = random.Random(f"{state.seed}:{cycle}")

        def jitter(key: str) -> float:
            a = c["noise"] * c[f"noise_{key}"]
            return rng.uniform(-a, a)

        nozzle += jitter("nozzleTemperature")
        pressure += jitter("pressure")
        cushion = max(0.0, cushion + jitter("meltCushion"))
        fill = min(1.0, max(0.0, fill + jitter("fillFraction")))
        cycle_time += jitter("cycleTime")

    values = {
        "ProcessData.cycleId": cycle,
        "ProcessData.cycleTime": cycle_time,
        "ProcessData.nozzleTemperature": nozzle,
        "ProcessData.pressure": pressure,
        "ProcessData.heating": cfg["cylinderHeating"],
        "PhaseData.dosingTime": float(dosing),
        "PhaseData.cylinderHeating": cfg["cylinderHeating"],
        "PhaseData.injectionFlow": float(flow),
        "PhaseData.switchOverVolume": float(sov),
        "PhaseData.meltCushion": cushion,
        "PhaseData.backPressure": float(bp),
        "PhaseData.fillFraction": fill,
    }
    return replace(state, barrel_temp=barrel, wear=wear, cycle=cycle), Situation(cycle, values)


class SimulatorPort:
    """Machine port over :func:`sim_step`; writes are buffered until the next cycle."""

    def __init__(self, state: SimState):
        self.state = state
        self.pending: dict[str, int | float] = {}
        self.writes: list[tuple[int, list[tuple[str, Any]]]] = []

    def read_cycle(self) -> Situation:
        if self.pending:
            self.state = replace(self.state, config={**self.state.config, **self.pending})
            self.pending = {}
        self.state, situation = sim_step(self.state)
        return situation

    def write_config(self, assignments: Iterable[tuple[str, Any]]) -> Ack:
        assignments = list(assignments)
        staged = {}
        for path, value in assignments:
            name = WRITABLE.get(path)
            if name is None:
                return Ack(False, f"{path} is not a machine setting")
            staged[name] = clamp_setting(name, value)
        self.pending.update(staged)
        self.writes.append((self.state.cycle, assignments))
        return Ack(True)

    def capabilities(self) -> dict[str, bool]:
        return {"writable": True}
