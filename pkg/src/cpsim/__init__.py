"""Collaborative perception simulator with bandit-based collaborator scheduling."""

from .config import ConfigError, ExperimentConfig, load_config
from .engine import Simulation, run_experiment, run_frame
from .world import build_scenario, step_world

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "Simulation", "run_experiment",
           "run_frame", "build_scenario", "step_world"]
__version__ = "0.1.0"
