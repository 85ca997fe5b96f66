"""Clipped-surrogate policy updates for the executor (or flat policy) and the commander."""

from __future__ import annotations

from typing import Callable

import numpy as np

from ..commander import CommanderPolicy, goal_logits, plackett_luce_log_prob, softmax_entropy, value_from_input
from ..executor import ExecutorOutput, action_log_prob
from ..nn import AdamState, Tensor, adam_update, huber_loss, zero_grads
from ..nn import autodiff as T
from .config import TrainConfig


def clipped_surrogate(ratio, advantage, clip: float):
    """Per-sample ``min(r A, clip(r, 1-c, 1+c) A)`` on plain arrays."""
    ratio = np.asarray(ratio, dtype=np.float64)
    return np.minimum(ratio * advantage, np.clip(ratio, 1.0 - clip, 1.0 + clip) * advantage)


def policy_loss(new_log_prob: Tensor, old_log_prob, advantage, clip: float) -> Tensor:
    ratio = T.exp(new_log_prob - np.asarray(old_log_prob))
    adv = np.asarray(advantage, dtype=np.float64)
    surr = T.minimum(ratio * adv, T.clip(ratio, 1.0 - clip, 1.0 + clip) * adv)
    return -surr.mean()


def normalize_advantages(adv: np.ndarray) -> np.ndarray:
    if adv.size < 2:
        return adv
    return (adv - adv.mean()) / (adv.std() + 1e-8)


def _check(loss: Tensor, what: str) -> None:
    if not np.isfinite(loss.data).all():
        raise FloatingPointError(f"non-finite {what} loss")


def executor_update(params: list[Tensor], forward: Callable[..., ExecutorOutput], opt: AdamState,
                    batch: dict[str, np.ndarray], cfg: TrainConfig, rng: np.random.Generator) -> dict:
    """PPO epochs over ``batch`` (arrays with a leading sample axis of per-step team records).

    ``forward(obs, goal, h_prev, noise)`` recomputes the policy on stored
    inputs with one-step recurrence from the stored hidden state.
    """
    n = len(batch["actions"])
    adv_all = normalize_advantages(batch["advantages"])
    stats = {"policy_loss": [], "value_loss": [], "entropy": [], "grad_norm": []}
    for _ in range(cfg.ppo_epochs):
        order = rng.permutation(n)
        for idx in np.array_split(order, cfg.num_minibatches):
            if len(idx) == 0:
                continue
            noise = None if batch.get("noise") is None else batch["noise"][idx]
            out = forward(batch["obs"][idx], batch["goal"][idx], batch["h_prev"][idx], noise)
            logp, ent = action_log_prob(out.logits, batch["actions"][idx])
            pl = policy_loss(logp, batch["log_probs"][idx], adv_all[idx], cfg.clip_ratio)
            vl = huber_loss(out.value, batch["returns"][idx], cfg.huber_delta)
            ent_mean = ent.mean()
            loss = pl + cfg.value_coef * vl - cfg.entropy_coef * ent_mean
            _check(loss, "executor")
            zero_grads(params)
            loss.backward()
            stats["grad_norm"].append(adam_update(opt, params))
            stats["policy_loss"].append(pl.item())
            stats["value_loss"].append(vl.item())
            stats["entropy"].append(ent_mean.item())
    return {k: float(np.mean(v)) for k, v in stats.items()}


def commander_update(policy: CommanderPolicy, opt: AdamState, inputs: np.ndarray, perms: np.ndarray,
                     old_log_probs: np.ndarray, old_values: np.ndarray, rewards: np.ndarray,
                     cfg: TrainConfig, rng: np.random.Generator) -> dict:
    """One-step episodes: advantage is ``r - V`` and the value target is ``r``."""
    params = policy.parameters()
    adv_all = normalize_advantages(rewards - old_values)
    n = len(rewards)
    stats = {"commander_policy_loss": [], "commander_value_loss": [], "commander_entropy": []}
    for _ in range(cfg.ppo_epochs):
        order = rng.permutation(n)
        for idx in np.array_split(order, cfg.num_minibatches):
            if len(idx) == 0:
                continue
            logits = goal_logits(policy, inputs[idx])
            logp = plackett_luce_log_prob(logits, perms[idx])
            pl = policy_loss(logp, old_log_probs[idx], adv_all[idx], cfg.clip_ratio)
            vl = huber_loss(value_from_input(policy, inputs[idx]), rewards[idx], cfg.huber_delta)
            ent = softmax_entropy(logits).mean()
            loss = pl + cfg.value_coef * vl - cfg.entropy_coef * ent
            _check(loss, "commander")
            zero_grads(params)
            loss.backward()
            adam_update(opt, params)
            stats["commander_policy_loss"].append(pl.item())
            stats["commander_value_loss"].append(vl.item())
            stats["commander_entropy"].append(ent.item())
    return {k: float(np.mean(v)) for k, v in stats.items()}
