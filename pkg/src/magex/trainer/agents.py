"""Method wiring: which networks act, how goals are assigned, and how inputs are built."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..assignment import distance_matrix, hungarian, random_assignment
from ..baselines.flat import FlatPolicy, flat_policy_forward
from ..commander import CommanderPolicy, assignment_reward, commander_input, decide
from ..envs import EnvConfig, Task, WorldState, assign, flat_obs_dim, flat_observation, obs_dim, observe, reset
from ..executor import WIDTH, ExecutorOutput, ExecutorPolicy, executor_forward, goal_input_dim, goal_inputs
from .buffer import CommanderRecord
from .config import TrainConfig
from .normalizer import RunningNormalizer

METHODS = ("mage_x", "mage_x_rg", "flat", "ma_astar", "hungarian_teacher")
LEARNED_METHODS = ("mage_x", "mage_x_rg", "flat", "hungarian_teacher")


@dataclass
class Policies:
    method: str
    env_cfg: EnvConfig
    actor: ExecutorPolicy | FlatPolicy
    commander: CommanderPolicy | None
    obs_norm: RunningNormalizer
    goal_norm: RunningNormalizer

    @property
    def is_flat(self) -> bool:
        return self.method == "flat"

    @property
    def trains_commander(self) -> bool:
        return self.method == "mage_x"

    @property
    def noise_blocks(self) -> int:
        return 0 if self.is_flat else self.actor.n_blocks

    @property
    def goal_dim(self) -> int:
        return 0 if self.is_flat else self.actor.f_goal.in_dim

    def forward(self, obs, goal, h_prev, noise=None, rng: np.random.Generator | None = None,
                hard: bool = True) -> ExecutorOutput:
        if self.is_flat:
            return flat_policy_forward(self.actor, obs, h_prev)
        return executor_forward(self.actor, obs, goal, h_prev, noise=noise, rng=rng, hard=hard)

    def inputs(self, state: WorldState) -> tuple[np.ndarray, np.ndarray]:
        """Raw (un-normalized) per-agent policy inputs for one env."""
        if self.is_flat:
            obs = flat_observation(state, self.env_cfg)
            return obs, np.zeros((len(obs), 0))
        o = observe(state, self.env_cfg)
        return o.agent, goal_inputs(o.agent, o.goal, o.label)

    def normalized(self, obs: np.ndarray, goal: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self.obs_norm.normalize(obs), self.goal_norm.normalize(goal) if goal.shape[-1] else goal

    def parameters(self) -> dict:
        out = dict(self.actor.named_parameters())
        if self.commander is not None:
            out.update(self.commander.named_parameters())
        return out


def build_policies(method: str, env_cfg: EnvConfig, train_cfg: TrainConfig, rng: np.random.Generator) -> Policies:
    if method not in LEARNED_METHODS:
        raise ValueError(f"method {method!r} has no learned policy; expected one of {LEARNED_METHODS}")
    n = env_cfg.n_agents
    if method == "flat":
        d_obs, d_goal = flat_obs_dim(env_cfg), 0
        actor = FlatPolicy.init(d_obs, env_cfg.n_actions, rng)
    else:
        d_obs = obs_dim(env_cfg)
        d_goal = goal_input_dim(d_obs, env_cfg.dim)
        actor = ExecutorPolicy.init(n, d_obs, env_cfg.dim, env_cfg.n_actions, rng,
                                    temperature=train_cfg.gumbel_temperature)
    commander = CommanderPolicy.init(n, env_cfg.dim, rng) if method == "mage_x" else None
    on = train_cfg.use_feature_norm
    return Policies(method, env_cfg, actor, commander, RunningNormalizer(d_obs, enabled=on),
                    RunningNormalizer(d_goal, enabled=on and d_goal > 0))


def hidden_zeros(n_envs: int, n_agents: int) -> np.ndarray:
    return np.zeros((n_envs, n_agents, WIDTH))


def _choose(policies: Policies, agents: np.ndarray, goals: np.ndarray, rng: np.random.Generator | None):
    """Pick one stage's assignment; returns (perm, commander input, log-prob, value)."""
    n, L = policies.env_cfg.n_agents, policies.env_cfg.map_size
    if policies.method == "mage_x":
        d = decide(policies.commander, agents, goals, L, rng)
        return d.perm.perm, commander_input(agents, goals, L), d.log_prob, d.value
    if policies.method == "mage_x_rg":
        if rng is None:
            raise ValueError("random goal assignment needs an rng")
        return random_assignment(n, rng).perm, None, 0.0, 0.0
    return hungarian(distance_matrix(agents, goals)).perm, None, 0.0, 0.0


def start_episode(policies: Policies, seed: int, rng: np.random.Generator | None
                  ) -> tuple[WorldState, CommanderRecord | None, float]:
    """Reset and assign goals. ``rng=None`` gives greedy commander decoding.

    Returns the assigned state, the commander record (learned commander only)
    and the mean assignment reward over stages.
    """
    cfg = policies.env_cfg
    state, _ = reset(cfg, seed)
    if policies.is_flat:
        return state, None, float("nan")
    stages = []  # (perm, commander input, log-prob, value, assignment reward)

    def run_stage(agents, goals):
        perm, x, lp, v = _choose(policies, agents, goals, rng)
        stages.append((perm, x, lp, v, assignment_reward(agents, goals, perm)[2]))
        return perm

    ball_perm = None
    proxies = state.agent_pos
    if cfg.task is Task.PUSH_BALL:
        ball_perm = run_stage(state.agent_pos, state.ball_pos)
        # each agent stands in for its ball when landmarks are handed out
        proxies = state.ball_pos[ball_perm]
    perm = run_stage(proxies, state.goal_pos)
    state = assign(state, perm, ball_perm)
    perms, inputs, logps, values, rewards = zip(*stages)
    record = None
    if policies.trains_commander:
        record = CommanderRecord(np.stack(inputs), np.stack(perms), np.array(logps), np.array(values),
                                 np.array(rewards))
    return state, record, float(np.mean(rewards))
