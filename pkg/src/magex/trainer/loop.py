"""Two-level training loop.

Each round steps ``n_threads`` environments for ``local_steps`` steps with the
shared executor, then runs one PPO update on those records. Whenever an episode
ends its commander decision is filed (one record per episode) and the env is
reset and reassigned; the commander is updated at the end of any round that
finished at least one episode.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from ..envs import EnvConfig, Task, collision_rate, step, success_rate
from ..executor import act
from ..nn import AdamState
from .agents import Policies, build_policies, hidden_zeros, start_episode
from .buffer import CommanderBuffer, ExecutorBuffer
from .checkpoint import save_checkpoint
from .config import TrainConfig
from .evaluate import evaluate
from .gae import gae
from .normalizer import ReturnScaler
from .ppo import commander_update, executor_update

log = logging.getLogger(__name__)

STREAMS = ("init", "act", "env", "commander", "update")


class TrainingAborted(RuntimeError):
    """Non-finite loss or gradient; ``checkpoint`` is the last good one (or None)."""

    def __init__(self, message: str, checkpoint: Path | None):
        super().__init__(message)
        self.checkpoint = checkpoint


@dataclass
class TrainResult:
    policies: Policies
    metrics: list[dict] = field(default_factory=list)
    checkpoint: Path | None = None


def make_streams(seed: int) -> dict[str, np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(len(STREAMS))
    return {name: np.random.default_rng(s) for name, s in zip(STREAMS, children)}


class _Episodes:
    """Per-env episode bookkeeping for one training run."""

    def __init__(self, policies: Policies, n_envs: int, rngs: dict[str, np.random.Generator]):
        self.policies = policies
        self.rngs = rngs
        self.states = [None] * n_envs
        self.records = [None] * n_envs
        self.assign_reward = np.zeros(n_envs)
        self.returns = np.zeros(n_envs)
        for e in range(n_envs):
            self.restart(e)

    def restart(self, e: int) -> None:
        seed = int(self.rngs["env"].integers(0, 2 ** 63 - 1))
        cmd_rng = None if self.policies.method == "hungarian_teacher" else self.rngs["commander"]
        self.states[e], self.records[e], self.assign_reward[e] = start_episode(self.policies, seed, cmd_rng)
        self.returns[e] = 0.0


def _nan_to_none(x: float | None):
    return None if x is None or not np.isfinite(x) else float(x)


def train(train_cfg: TrainConfig, env_cfg: EnvConfig, method: str = "mage_x", out_dir: str | Path | None = None,
          on_round: Callable[[dict], None] | None = None) -> TrainResult:
    rngs = make_streams(train_cfg.seed)
    policies = build_policies(method, env_cfg, train_cfg, rngs["init"])
    E, T, N = train_cfg.n_threads, train_cfg.local_steps, env_cfg.n_agents
    actor_params = list(policies.actor.named_parameters().values())
    actor_opt = AdamState(train_cfg.lr, eps=train_cfg.adam_eps, max_grad_norm=train_cfg.max_grad_norm)
    cmd_opt = AdamState(train_cfg.commander_lr, eps=train_cfg.adam_eps, max_grad_norm=train_cfg.max_grad_norm)
    buffer = ExecutorBuffer(T, E, N, policies.obs_norm.shape[0], policies.goal_dim, hidden_zeros(1, 1).shape[-1],
                            policies.noise_blocks)
    commander_buffer = CommanderBuffer()
    scaler = ReturnScaler((E, N), train_cfg.gamma, enabled=train_cfg.use_reward_norm)
    episodes = _Episodes(policies, E, rngs)
    h = hidden_zeros(E, N)
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    metrics_fh = open(out_dir / "metrics.jsonl", "w", encoding="utf-8") if out_dir else None
    result = TrainResult(policies)

    def checkpoint(round_idx: int) -> Path | None:
        if out_dir is None:
            return None
        extra = {"round": round_idx,
                 "rng_states": {k: g.bit_generator.state for k, g in rngs.items()},
                 "reward_scale": scaler.stats.state_dict()}
        result.checkpoint = save_checkpoint(out_dir / "checkpoint.npz", policies, train_cfg, extra)
        return result.checkpoint

    def forward(obs, goal, h_prev, noise):
        return policies.forward(obs, goal, h_prev, noise=noise)

    try:
        for r in range(train_cfg.n_rounds):
            buffer.clear()
            raw_obs, raw_goal = [], []
            finished = {"success": [], "collision": [], "return": [], "assign_reward": []}
            for _ in range(T):
                raw = [policies.inputs(s) for s in episodes.states]
                obs_raw, goal_raw = np.stack([x[0] for x in raw]), np.stack([x[1] for x in raw])
                raw_obs.append(obs_raw)
                raw_goal.append(goal_raw)
                obs, goal = policies.normalized(obs_raw, goal_raw)
                out = policies.forward(obs, goal, h, rng=rngs["act"])
                actions, logp = act(out.logits, rngs["act"])
                rewards = np.zeros((E, N))
                dones = np.zeros(E, dtype=bool)
                for e in range(E):
                    res = step(episodes.states[e], actions[e], env_cfg)
                    episodes.states[e] = res.state
                    rewards[e], dones[e] = res.rewards, res.done
                    episodes.returns[e] += float(res.rewards.mean())
                buffer.add(obs, goal, h, out.noise, actions, logp, out.value.data, rewards, dones)
                h = out.h_next.data.copy()
                for e in np.flatnonzero(dones):
                    final = episodes.states[e]
                    finished["success"].append(success_rate(final))
                    if env_cfg.task is Task.DRONE:
                        finished["collision"].append(collision_rate(final, env_cfg))
                    finished["return"].append(episodes.returns[e])
                    finished["assign_reward"].append(episodes.assign_reward[e])
                    if episodes.records[e] is not None:
                        commander_buffer.add(episodes.records[e])
                    episodes.restart(e)
                    h[e] = 0.0

            # bootstrap from the state after the last step (a finished env's is masked by its done flag);
            # values live in the scaled-reward space, so it needs no rescaling
            raw = [policies.inputs(s) for s in episodes.states]
            obs, goal = policies.normalized(np.stack([x[0] for x in raw]), np.stack([x[1] for x in raw]))
            bootstrap = policies.forward(obs, goal, h, rng=rngs["act"]).value.data

            scaler.observe(buffer.rewards, buffer.dones)
            adv, ret = gae(scaler.scale(buffer.rewards), buffer.values, bootstrap,
                           train_cfg.gamma, train_cfg.gae_lambda, buffer.dones)
            batch = {k: buffer.flat(k) for k in ("obs", "goal", "h_prev", "actions", "log_probs")}
            batch["noise"] = None if buffer.noise is None else buffer.flat("noise")
            batch["advantages"] = adv.reshape(T * E, N)
            batch["returns"] = ret.reshape(T * E, N)
            stats = executor_update(actor_params, forward, actor_opt, batch, train_cfg, rngs["update"])

            n_episodes = len(commander_buffer)
            if policies.trains_commander and n_episodes:
                c = commander_buffer.stacked()
                stats.update(commander_update(policies.commander, cmd_opt, c.inputs, c.perms, c.log_probs,
                                              c.values, c.rewards, train_cfg, rngs["update"]))
            commander_buffer.clear()
            policies.obs_norm.update(np.concatenate(raw_obs).reshape(-1, policies.obs_norm.shape[0]))
            if policies.goal_dim:
                policies.goal_norm.update(np.concatenate(raw_goal).reshape(-1, policies.goal_dim))

            record = {
                "round": r,
                "env_steps": (r + 1) * train_cfg.steps_per_round,
                "episodes": n_episodes,
                "executor_records": buffer.n_records,
                "success_rate": float(np.mean(finished["success"])) if finished["success"] else None,
                "collision_rate": float(np.mean(finished["collision"])) if finished["collision"] else None,
                "mean_episode_reward": float(np.mean(finished["return"])) if finished["return"] else None,
                "commander_reward_mean": (_nan_to_none(float(np.mean(finished["assign_reward"])))
                                          if finished["assign_reward"] else None),
            }
            record.update({k: float(v) for k, v in sorted(stats.items())})
            last_round = r == train_cfg.n_rounds - 1
            if last_round or (train_cfg.eval_every and (r + 1) % train_cfg.eval_every == 0):
                if train_cfg.eval_episodes:
                    rep = evaluate(policies, train_cfg.eval_episodes, [train_cfg.seed])
                    record["eval_success"] = rep.success_mean
                    if rep.collision_mean is not None:
                        record["eval_collision"] = rep.collision_mean
                checkpoint(r)
            result.metrics.append(record)
            if metrics_fh:
                metrics_fh.write(json.dumps(record, sort_keys=True) + "\n")
                metrics_fh.flush()
            if on_round:
                on_round(record)
    except FloatingPointError as exc:
        log.error("aborting: %s", exc)
        raise TrainingAborted(str(exc), result.checkpoint) from exc
    finally:
        if metrics_fh:
            metrics_fh.close()
    return result
