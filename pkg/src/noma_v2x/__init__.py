"""Slot and sub-channel scheduling for NOMA V2X broadcasting.

Rotation-matching schedulers (UTSA for time slots, RMSA for sub-channels),
per-slot power control, a hard-decoding truth layer and an experiment harness.
"""
from .channel import RadioConfig
from .config import ConfigError, ExperimentConfig, PRESETS, preset
from .powerctrl import PowerConfig
from .scenario import Scenario, ScenarioConfig, generate_urban_grid
from .schedule import Schedule, check_constraints
from .scheduler import GGA, MCD, OMA, SCHEMES, SchedulerConfig, SchedulingError

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "ExperimentConfig", "GGA", "MCD", "OMA", "PRESETS", "PowerConfig", "RadioConfig",
    "SCHEMES", "Scenario", "ScenarioConfig", "Schedule", "SchedulerConfig", "SchedulingError",
    "check_constraints", "generate_urban_grid", "preset",
]
