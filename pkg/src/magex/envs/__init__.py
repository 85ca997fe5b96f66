"""Simple Spread, Push Ball and Drone navigation tasks."""

from .config import ConfigError, EnvConfig, SpawnMode, Task, TASK_DEFAULTS
from .core import (
    DRONE_DIRECTIONS,
    DRONE_STOP,
    MPE_ACTIONS,
    MPE_DIRECTIONS,
    Observation,
    StepResult,
    UnsupportedMetric,
    WorldState,
    assign,
    collision_rate,
    current_targets,
    flat_obs_dim,
    flat_observation,
    obs_dim,
    observe,
    reset,
    reward,
    step,
    success_rate,
)
from .dump import TrajectoryWriter, read_trajectory

__all__ = [
    "ConfigError", "EnvConfig", "SpawnMode", "Task", "TASK_DEFAULTS",
    "DRONE_DIRECTIONS", "DRONE_STOP", "MPE_ACTIONS", "MPE_DIRECTIONS",
    "Observation", "StepResult", "UnsupportedMetric", "WorldState",
    "assign", "collision_rate", "current_targets", "flat_obs_dim", "flat_observation",
    "obs_dim", "observe", "reset", "reward", "step", "success_rate",
    "TrajectoryWriter", "read_trajectory",
]
