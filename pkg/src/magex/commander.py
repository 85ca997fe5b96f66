"""Goal Commander: scores goals from the joint layout and turns the ranking into an assignment.

Input layout is the flat vector ``[agents..., goals...]`` with each position
divided by the map size. One softmax over goals gives ``p_goal``; the greedy
decode hands the i-th most probable goal to agent i. Training draws whole
permutations from the Plackett-Luce distribution over ``p_goal``, whose mode
is exactly the greedy decode.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assignment import Assignment, assignment_cost, commander_reward, distance_matrix, hungarian
from .nn import LayerParams, ShapeError, Tensor, linear, mlp_forward, softmax
from .nn import autodiff as T

HIDDEN = 32


@dataclass
class CommanderPolicy:
    n_agents: int
    dim: int
    f_sche: LayerParams
    value_head: list[LayerParams]

    @classmethod
    def init(cls, n_agents: int, dim: int, rng: np.random.Generator) -> "CommanderPolicy":
        in_dim = 2 * n_agents * dim
        return cls(n_agents, dim,
                   LayerParams.init("commander.f_sche", in_dim, n_agents, rng, gain=0.01),
                   [LayerParams.init("commander.value.0", in_dim, HIDDEN, rng, gain=np.sqrt(2)),
                    LayerParams.init("commander.value.1", HIDDEN, 1, rng, gain=1.0)])

    @classmethod
    def zeros(cls, n_agents: int, dim: int) -> "CommanderPolicy":
        in_dim = 2 * n_agents * dim
        return cls(n_agents, dim, LayerParams.zeros("commander.f_sche", in_dim, n_agents),
                   [LayerParams.zeros("commander.value.0", in_dim, HIDDEN),
                    LayerParams.zeros("commander.value.1", HIDDEN, 1)])

    def policy_parameters(self) -> list[Tensor]:
        return self.f_sche.parameters()

    def value_parameters(self) -> list[Tensor]:
        return [p for layer in self.value_head for p in layer.parameters()]

    def parameters(self) -> list[Tensor]:
        return self.policy_parameters() + self.value_parameters()

    def named_parameters(self) -> dict[str, Tensor]:
        return {p.name: p for p in self.parameters()}


@dataclass
class CommanderDecision:
    scores: np.ndarray
    p_goal: np.ndarray
    perm: Assignment
    log_prob: float
    value: float


def commander_input(agent_pos, goal_pos, map_size: float = 1.0) -> np.ndarray:
    """Flatten ``(agents, goals)`` to ``[..., 2*N*dim]`` in units of the map size."""
    a = np.asarray(agent_pos, dtype=np.float64)
    g = np.asarray(goal_pos, dtype=np.float64)
    if a.shape != g.shape:
        raise ShapeError(f"{a.shape[-2] if a.ndim > 1 else a.shape} agents vs "
                         f"{g.shape[-2] if g.ndim > 1 else g.shape} goals")
    lead = a.shape[:-2]
    return np.concatenate([a.reshape(lead + (-1,)), g.reshape(lead + (-1,))], axis=-1) / map_size


def _check_input(policy: CommanderPolicy, x: np.ndarray) -> None:
    expected = 2 * policy.n_agents * policy.dim
    if x.shape[-1] != expected:
        raise ShapeError(f"commander for {policy.n_agents} agents in {policy.dim}D expects "
                         f"{expected} inputs, got {x.shape[-1]}")


def goal_logits(policy: CommanderPolicy, x) -> Tensor:
    x = T.as_tensor(x)
    _check_input(policy, x.data)
    return linear(policy.f_sche, x)


def score_goals(policy: CommanderPolicy, agent_pos, goal_pos, map_size: float = 1.0) -> Tensor:
    return softmax(goal_logits(policy, commander_input(agent_pos, goal_pos, map_size)), axis=-1)


def value_from_input(policy: CommanderPolicy, x) -> Tensor:
    x = T.as_tensor(x)
    _check_input(policy, x.data)
    out = mlp_forward(policy.value_head, x, activation="relu")
    return T.reshape(out, out.shape[:-1])


def commander_value(policy: CommanderPolicy, agent_pos, goal_pos, map_size: float = 1.0) -> Tensor:
    return value_from_input(policy, commander_input(agent_pos, goal_pos, map_size))


def decode_greedy(p_goal) -> np.ndarray:
    """Rank goals by probability (ties to the lower index); agent i takes the i-th ranked goal."""
    p = np.asarray(p_goal, dtype=np.float64)
    return np.argsort(-p, kind="stable").astype(np.int64)


def sample_assignment(p_goal, rng: np.random.Generator) -> tuple[np.ndarray, float]:
    """Draw goals one at a time without replacement, each in proportion to the remaining mass."""
    p = np.asarray(p_goal, dtype=np.float64)
    n = len(p)
    remaining = np.ones(n, dtype=bool)
    perm = np.empty(n, dtype=np.int64)
    log_prob = 0.0
    for i in range(n):
        idx = np.flatnonzero(remaining)
        if len(idx) == 1:
            choice = idx[0]
        else:
            w = p[idx]
            total = w.sum()
            if total <= 0:
                w, total = np.ones(len(idx)), float(len(idx))
            cdf = np.cumsum(w) / total
            k = min(int(np.searchsorted(cdf, rng.random(), side="right")), len(idx) - 1)
            choice = idx[k]
            log_prob += float(np.log(w[k] / total))
        perm[i] = choice
        remaining[choice] = False
    return perm, log_prob


def plackett_luce_log_prob(logits: Tensor, perms) -> Tensor:
    """Differentiable log-probability of ``perms`` [B, N] under the Plackett-Luce model on ``logits`` [B, N]."""
    logits = T.as_tensor(logits)
    perms = np.asarray(perms, dtype=np.int64)
    if logits.ndim == 1:
        logits = T.reshape(logits, (1,) + logits.shape)
    if perms.ndim == 1:
        perms = perms[None]
    B, n = perms.shape
    rows = np.arange(B)
    remaining = np.ones((B, n), dtype=bool)
    total = None
    for i in range(n - 1):
        chosen = logits[rows, perms[:, i]]
        # log-sum-exp over the goals still available, shifted by a detached masked max
        masked = np.where(remaining, logits.data, -np.inf)
        shift = masked.max(axis=1, keepdims=True)
        z = T.where(remaining, logits - shift, 0.0)  # removed goals are zeroed before exp, then masked
        w = T.exp(z) * remaining.astype(np.float64)
        lse = T.log(w.sum(axis=1)) + shift[:, 0]
        term = chosen - lse
        total = term if total is None else total + term
        remaining[rows, perms[:, i]] = False
    if total is None:
        return Tensor(np.zeros(B))
    return total


def softmax_entropy(logits: Tensor) -> Tensor:
    logp = T.log_softmax(logits, axis=-1)
    return -(T.exp(logp) * logp).sum(axis=-1)


def decide(policy: CommanderPolicy, agent_pos, goal_pos, map_size: float = 1.0,
           rng: np.random.Generator | None = None) -> CommanderDecision:
    """One commander action: greedy when ``rng`` is None, Plackett-Luce sample otherwise."""
    x = commander_input(agent_pos, goal_pos, map_size)
    logits = goal_logits(policy, x)
    p = softmax(logits).data
    if rng is None:
        perm = decode_greedy(p)
        log_prob = float(plackett_luce_log_prob(logits, perm).data[0])
    else:
        perm, log_prob = sample_assignment(p, rng)
    cost = distance_matrix(agent_pos, goal_pos)
    return CommanderDecision(logits.data.copy(), p, Assignment(perm, assignment_cost(cost, perm)),
                             log_prob, float(value_from_input(policy, x).data))


def assignment_reward(agent_pos, goal_pos, perm) -> tuple[float, float, float]:
    """(C_c, C_h, R_c) for assigning goal ``perm[i]`` to agent i."""
    cost = distance_matrix(agent_pos, goal_pos)
    c_c = assignment_cost(cost, perm)
    c_h = hungarian(cost).total_cost
    return c_c, c_h, commander_reward(c_c, c_h)
