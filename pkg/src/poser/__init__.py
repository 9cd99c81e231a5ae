"""Simulator and algorithm library for probabilistic sensor-state switching with resilient tracking."""
from .config import ConfigError, WorldConfig, default_config, load_config, validate_config
from .network import State
from .sim import Scheduler, World, inject_gap, make_world, run_step

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "WorldConfig", "default_config", "load_config", "validate_config",
    "State", "Scheduler", "World", "inject_gap", "make_world", "run_step", "__version__",
]
