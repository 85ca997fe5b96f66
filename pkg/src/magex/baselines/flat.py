"""Flat shared-parameter recurrent policy over the assignment-free observation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..executor import WIDTH, ExecutorOutput
from ..nn import GRUParams, LayerParams, ShapeError, Tensor, linear, mlp_forward, recurrent_step
from ..nn import autodiff as T


@dataclass
class FlatPolicy:
    obs_dim: int
    n_actions: int
    torso: list[LayerParams]
    gru: GRUParams
    action_head: LayerParams
    value_head: LayerParams

    @classmethod
    def init(cls, obs_dim: int, n_actions: int, rng: np.random.Generator) -> "FlatPolicy":
        g = np.sqrt(2.0)
        return cls(obs_dim, n_actions,
                   [LayerParams.init("flat.torso.0", obs_dim, WIDTH, rng, g),
                    LayerParams.init("flat.torso.1", WIDTH, WIDTH, rng, g)],
                   GRUParams.init("flat.gru", WIDTH, WIDTH, rng),
                   LayerParams.init("flat.action_head", WIDTH, n_actions, rng, 0.01),
                   LayerParams.init("flat.value_head", WIDTH, 1, rng, 1.0))

    def parameters(self) -> list[Tensor]:
        out = [p for layer in self.torso for p in layer.parameters()]
        return out + self.gru.parameters() + self.action_head.parameters() + self.value_head.parameters()

    def named_parameters(self) -> dict[str, Tensor]:
        return {p.name: p for p in self.parameters()}


def flat_policy_forward(policy: FlatPolicy, obs, h_prev) -> ExecutorOutput:
    """Per-agent torso, GRU and heads on ``obs`` [B, N, obs_dim]; no graph, no goal input."""
    obs, h_prev = T.as_tensor(obs), T.as_tensor(h_prev)
    if obs.shape[-1] != policy.obs_dim:
        raise ShapeError(f"flat policy expects {policy.obs_dim} features, got {obs.shape[-1]}")
    x = mlp_forward(policy.torso, obs, activation="relu", out_activation="relu")
    h = recurrent_step(policy.gru, x, h_prev)
    v = linear(policy.value_head, h)
    return ExecutorOutput(linear(policy.action_head, h), T.reshape(v, v.shape[:-1]), h, None, [])
