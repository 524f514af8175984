"""Machine ports: the simulator and the CSV replay adapter."""

from .port import Ack, EndOfData, MachinePort, PortError
from .replay import ReplayPort, ReplaySource, RowError, SituationLog
from .sim import SimState, SimulatorPort, load_constants, sim_step

__all__ = [
    "Ack", "EndOfData", "MachinePort", "PortError", "ReplayPort", "ReplaySource", "RowError", "SimState",
    "SimulatorPort", "SituationLog", "load_constants", "sim_step",
]
