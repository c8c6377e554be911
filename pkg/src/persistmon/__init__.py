"""Single-agent persistent monitoring of mobile targets: GP beliefs, roadmap
planning, a spatio-temporal attention policy trained with PPO, and baselines."""

from .belief_gp import KernelParams, TargetBelief, matern32
from .env_sim import EnvConfig, Scenario, World, make_scenario
from .roadmap import Roadmap, build_roadmap

__version__ = "0.1.0"

__all__ = ["EnvConfig", "KernelParams", "Roadmap", "Scenario", "TargetBelief", "World",
           "build_roadmap", "make_scenario", "matern32"]
