"""Rollout storage: per-step executor records and per-episode commander records."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ExecutorBuffer:
    """Fixed-capacity ``[local_steps, threads, agents, ...]`` arrays for one collection round."""

    def __init__(self, local_steps: int, n_envs: int, n_agents: int, obs_dim: int, goal_dim: int,
                 hidden: int, noise_blocks: int = 0):
        T, E, N = local_steps, n_envs, n_agents
        self.shape = (T, E, N)
        self.obs = np.zeros((T, E, N, obs_dim))
        self.goal = np.zeros((T, E, N, goal_dim))
        self.h_prev = np.zeros((T, E, N, hidden))
        self.noise = np.zeros((T, E, noise_blocks, N, N)) if noise_blocks else None
        self.actions = np.zeros((T, E, N), dtype=np.int64)
        self.log_probs = np.zeros((T, E, N))
        self.values = np.zeros((T, E, N))
        self.rewards = np.zeros((T, E, N))
        self.dones = np.zeros((T, E), dtype=bool)
        self.step = 0

    @property
    def capacity(self) -> int:
        return self.shape[0]

    @property
    def full(self) -> bool:
        return self.step == self.capacity

    @property
    def n_records(self) -> int:
        """Agent-step records stored so far."""
        return self.step * self.shape[1] * self.shape[2]

    def add(self, obs, goal, h_prev, noise, actions, log_probs, values, rewards, dones) -> None:
        if self.full:
            raise OverflowError("executor buffer is full; clear it before the next round")
        t = self.step
        self.obs[t], self.goal[t], self.h_prev[t] = obs, goal, h_prev
        if self.noise is not None:
            self.noise[t] = noise
        self.actions[t], self.log_probs[t], self.values[t] = actions, log_probs, values
        self.rewards[t], self.dones[t] = rewards, dones
        self.step += 1

    def clear(self) -> None:
        self.step = 0

    def flat(self, name: str) -> np.ndarray:
        """Merge the step and thread axes: ``[T * E, ...]``."""
        arr = getattr(self, name)[: self.step]
        return arr.reshape((arr.shape[0] * arr.shape[1],) + arr.shape[2:])


@dataclass
class CommanderRecord:
    """One episode's commander decisions (two stages for Push Ball: balls, then landmarks)."""

    inputs: np.ndarray  # [S, in_dim]
    perms: np.ndarray  # [S, N]
    log_probs: np.ndarray  # [S]
    values: np.ndarray  # [S]
    rewards: np.ndarray  # [S]


@dataclass
class CommanderBuffer:
    records: list[CommanderRecord] = field(default_factory=list)

    def add(self, rec: CommanderRecord) -> None:
        self.records.append(rec)

    def __len__(self) -> int:
        return len(self.records)

    def clear(self) -> None:
        self.records.clear()

    def stacked(self) -> CommanderRecord:
        return CommanderRecord(*(np.concatenate([getattr(r, k) for r in self.records])
                                 for k in ("inputs", "perms", "log_probs", "values", "rewards")))
