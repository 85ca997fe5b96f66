from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, fields


class ConfigError(ValueError):
    pass


class Task(str, enum.Enum):
    SIMPLE_SPREAD = "SimpleSpread"
    PUSH_BALL = "PushBall"
    DRONE = "Drone"


class SpawnMode(str, enum.Enum):
    RANDOM = "Random"
    MODE1 = "Mode1"
    MODE2 = "Mode2"
    MODE3 = "Mode3"
    MODE4 = "Mode4"
    ANY_MODE = "AnyMode"  # one of Mode1..Mode4 drawn per reset


# (task, n_agents) -> (map_size, horizon, spawn_mode)
TASK_DEFAULTS = {
    (Task.SIMPLE_SPREAD, 5): (4.0, 60, SpawnMode.RANDOM),
    (Task.SIMPLE_SPREAD, 20): (36.0, 100, SpawnMode.ANY_MODE),
    (Task.SIMPLE_SPREAD, 50): (100.0, 120, SpawnMode.ANY_MODE),
    (Task.PUSH_BALL, 5): (16.0, 100, SpawnMode.RANDOM),
    (Task.PUSH_BALL, 20): (144.0, 200, SpawnMode.ANY_MODE),
    (Task.DRONE, 2): (3.0, 120, SpawnMode.RANDOM),
    (Task.DRONE, 4): (3.0, 120, SpawnMode.RANDOM),
}

DRONE_HALF_EXTENT = 1.5
DRONE_SPAWN_Z = 1.5
DRONE_Z_RANGE = (0.0, 3.0)
DRONE_MAX_SPEED = 2.0
DRONE_ACCEL = 5.0
DRONE_PHYSICS_HZ = 120
DRONE_SUBSTEPS = 4
DRONE_COLLISION_RADIUS = 0.06


@dataclass
class EnvConfig:
    task: Task = Task.SIMPLE_SPREAD
    n_agents: int = 5
    map_size: float | None = None
    horizon: int | None = None
    spawn_mode: SpawnMode | None = None
    alpha: float = 1.0
    beta: float = 0.1
    gamma: float = 1.0
    reach_radius: float | None = None
    collision_radius: float | None = None
    rng_seed: int = 0
    step_size: float | None = None  # MPE displacement per action; default 2 * map_size / horizon

    def __post_init__(self):
        try:
            self.task = Task(self.task)
        except ValueError:
            raise ConfigError(f"unknown task {self.task!r}; expected one of {[t.value for t in Task]}")
        if int(self.n_agents) != self.n_agents or self.n_agents < 1:
            raise ConfigError(f"n_agents must be a positive integer, got {self.n_agents!r}")
        self.n_agents = int(self.n_agents)
        default = TASK_DEFAULTS.get((self.task, self.n_agents))
        if self.map_size is None:
            if self.task is Task.DRONE:
                self.map_size = 2 * DRONE_HALF_EXTENT
            elif default is None:
                raise ConfigError(f"no default map_size for {self.task.value} with {self.n_agents} agents")
            else:
                self.map_size = default[0]
        if self.horizon is None:
            if default is None and self.task is not Task.DRONE:
                raise ConfigError(f"no default horizon for {self.task.value} with {self.n_agents} agents")
            self.horizon = default[1] if default else 120
        if self.spawn_mode is None:
            self.spawn_mode = default[2] if default else SpawnMode.RANDOM
        try:
            self.spawn_mode = SpawnMode(self.spawn_mode)
        except ValueError:
            raise ConfigError(f"unknown spawn_mode {self.spawn_mode!r}")
        self.map_size = float(self.map_size)
        self.horizon = int(self.horizon)
        if self.map_size <= 0 or self.horizon < 1:
            raise ConfigError("map_size and horizon must be positive")
        if self.task is Task.DRONE:
            if self.map_size != 2 * DRONE_HALF_EXTENT:
                raise ConfigError("the Drone arena is fixed at 3 m per side")
            if self.spawn_mode is not SpawnMode.RANDOM:
                raise ConfigError("Drone supports only Random spawns")
        if self.reach_radius is None:
            self.reach_radius = 0.05 * self.map_size
        if self.collision_radius is None:
            self.collision_radius = DRONE_COLLISION_RADIUS if self.task is Task.DRONE else 0.025 * self.map_size
        if self.step_size is None:
            self.step_size = 2.0 * self.map_size / self.horizon
        for name in ("reach_radius", "collision_radius", "step_size"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")

    @property
    def dim(self) -> int:
        return 3 if self.task is Task.DRONE else 2

    @property
    def n_actions(self) -> int:
        return 27 if self.task is Task.DRONE else 4

    @property
    def is_mpe(self) -> bool:
        return self.task is not Task.DRONE

    def to_dict(self) -> dict:
        d = asdict(self)
        d["task"] = self.task.value
        d["spawn_mode"] = self.spawn_mode.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EnvConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown env config keys: {sorted(unknown)}")
        return cls(**d)
