from __future__ import annotations

from dataclasses import asdict, dataclass, fields

from ..envs.config import ConfigError


@dataclass
class TrainConfig:
    lr: float = 2.5e-5
    commander_lr: float | None = None  # defaults to lr
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_ratio: float = 0.2
    ppo_epochs: int = 4
    num_minibatches: int = 1
    max_grad_norm: float = 10.0
    huber_delta: float = 10.0
    entropy_coef: float = 0.01
    value_coef: float = 1.0
    adam_eps: float = 1e-5
    use_reward_norm: bool = True
    use_feature_norm: bool = True
    n_threads: int = 10
    local_steps: int = 15
    total_steps: int = 300_000
    eval_every: int = 0  # rounds between checkpoints/evaluations; 0 = only at the end
    eval_episodes: int = 0
    gumbel_temperature: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.commander_lr is None:
            self.commander_lr = self.lr
        positive = ("lr", "commander_lr", "clip_ratio", "ppo_epochs", "num_minibatches", "max_grad_norm",
                    "huber_delta", "n_threads", "local_steps", "total_steps", "gumbel_temperature", "adam_eps")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"train.{name} must be positive, got {getattr(self, name)!r}")
        for name in ("gamma", "gae_lambda"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"train.{name} must lie in [0, 1]")
        for name in ("entropy_coef", "value_coef", "eval_every", "eval_episodes"):
            if getattr(self, name) < 0:
                raise ConfigError(f"train.{name} must be non-negative")
        if self.total_steps < self.steps_per_round:
            raise ConfigError(f"train.total_steps={self.total_steps} is below one round "
                              f"({self.n_threads} threads x {self.local_steps} steps)")

    @property
    def steps_per_round(self) -> int:
        return self.n_threads * self.local_steps

    @property
    def n_rounds(self) -> int:
        return self.total_steps // self.steps_per_round

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)
