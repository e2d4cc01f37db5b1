"""Safe-by-construction autopilot for urban road maps, with a monitored simulator."""

from .dynamics import DynamicsParams, braking_distance, max_acceleration, speed_control
from .scenario import Scenario, load_scenario, parse_scenario, validate_assumptions
from .simulate import SAFE, VIOLATION, RunResult, run

__all__ = [
    "DynamicsParams",
    "braking_distance",
    "max_acceleration",
    "speed_control",
    "Scenario",
    "load_scenario",
    "parse_scenario",
    "validate_assumptions",
    "SAFE",
    "VIOLATION",
    "RunResult",
    "run",
]
