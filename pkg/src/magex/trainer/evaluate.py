"""Greedy evaluation: per-seed episode batches, reported as mean (std over seeds)."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

from ..envs import EnvConfig, Task, WorldState, collision_rate, reset, step, success_rate
from ..executor import act
from .agents import Policies, hidden_zeros, start_episode

EVAL_STREAM = 0x5EED


def eval_seed(seed: int, episode: int) -> int:
    """Env seed for evaluation episode ``episode`` of run seed ``seed``; disjoint from training draws."""
    return int(np.random.SeedSequence([EVAL_STREAM, seed, episode]).generate_state(1, np.uint64)[0] >> 1)


@dataclass
class EvalReport:
    success_mean: float
    success_std: float
    per_seed_success: list[float]
    episodes: int
    seeds: list[int]
    collision_mean: float | None = None
    collision_std: float | None = None

    def format(self) -> str:
        text = f"success {self.success_mean:.2f} ({self.success_std:.2f})"
        if self.collision_mean is not None:
            text += f", collision {self.collision_mean:.2f} ({self.collision_std:.2f})"
        return text

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(**d)


def run_episodes(env_cfg: EnvConfig, starts: Sequence[WorldState],
                 controller: Callable[[list[WorldState], np.ndarray], np.ndarray]) -> list[WorldState]:
    """Step a batch of episodes to completion; ``controller(states, active)`` returns [E, N] actions."""
    states = list(starts)
    active = np.ones(len(states), dtype=bool)
    while active.any():
        actions = controller(states, active)
        for e in np.flatnonzero(active):
            res = step(states[e], actions[e], env_cfg)
            states[e] = res.state
            active[e] = not res.done
    return states


def learned_controller(policies: Policies, n_envs: int):
    h = hidden_zeros(n_envs, policies.env_cfg.n_agents)

    def control(states, active):
        nonlocal h
        raw = [policies.inputs(s) for s in states]
        obs, goal = policies.normalized(np.stack([r[0] for r in raw]), np.stack([r[1] for r in raw]))
        out = policies.forward(obs, goal, h)
        h = out.h_next.data
        return act(out.logits)[0]

    return control


def report(env_cfg: EnvConfig, finals_by_seed: dict[int, list[WorldState]]) -> EvalReport:
    seeds = list(finals_by_seed)
    per_seed = [float(np.mean([success_rate(s) for s in finals_by_seed[k]])) for k in seeds]
    all_success = [success_rate(s) for k in seeds for s in finals_by_seed[k]]
    rep = EvalReport(float(np.mean(all_success)), float(np.std(per_seed)), per_seed,
                     len(finals_by_seed[seeds[0]]), seeds)
    if env_cfg.task is Task.DRONE:
        per_seed_c = [float(np.mean([collision_rate(s, env_cfg) for s in finals_by_seed[k]])) for k in seeds]
        rep.collision_mean = float(np.mean([collision_rate(s, env_cfg) for k in seeds for s in finals_by_seed[k]]))
        rep.collision_std = float(np.std(per_seed_c))
    return rep


def evaluate(policies: Policies, episodes: int, seeds: Sequence[int]) -> EvalReport:
    """Greedy commander decode and argmax actions with noise-free neighbour selection."""
    env_cfg = policies.env_cfg
    finals = {}
    for seed in seeds:
        starts = []
        for ep in range(episodes):
            # random-goal ablation still needs a (seeded) draw at evaluation time
            rng = np.random.default_rng([seed, ep]) if policies.method == "mage_x_rg" else None
            starts.append(start_episode(policies, eval_seed(seed, ep), rng)[0])
        finals[seed] = run_episodes(env_cfg, starts, learned_controller(policies, episodes))
    return report(env_cfg, finals)


def evaluate_controller(env_cfg: EnvConfig, episodes: int, seeds: Sequence[int],
                        start: Callable[[int], WorldState],
                        make_controller: Callable[[int], Callable]) -> EvalReport:
    """Evaluate any controller; ``start(env_seed)`` builds the initial state and
    ``make_controller(n_envs)`` a fresh controller per seed batch."""
    finals = {}
    for seed in seeds:
        starts = [start(eval_seed(seed, ep)) for ep in range(episodes)]
        finals[seed] = run_episodes(env_cfg, starts, make_controller(episodes))
    return report(env_cfg, finals)


def evaluate_random(env_cfg: EnvConfig, episodes: int, seeds: Sequence[int]) -> EvalReport:
    """Uniform random actions with no assignment, so any agent may claim any landmark."""
    def make(n_envs):
        rng = np.random.default_rng([EVAL_STREAM, n_envs])
        return lambda states, active: rng.integers(0, env_cfg.n_actions, (len(states), env_cfg.n_agents))

    return evaluate_controller(env_cfg, episodes, seeds, lambda s: reset(env_cfg, s)[0], make)
