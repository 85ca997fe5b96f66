"""Action Executor: graph-encoded team features plus a goal embedding to per-agent actions.

Forward pipeline for a batch ``[B, N, ...]`` of agents:

1. node embedding ``f_o`` and one GCN layer over the fully-connected agent graph;
2. ``n_blocks`` graph-encoder blocks, each picking one neighbour per agent by a
   row-wise straight-through Gumbel-softmax and running a GCN restricted to
   that agent's ego subgraph;
3. goal embedding ``f_goal`` of (goal, own observation, reached label);
4. ``f_state`` on ``[goal embedding, graph feature]`` and a GRU;
5. linear action-logit and value heads on the GRU output.

Pairwise neighbour logits are ``<f_g(h_i), h_j> / sqrt(width)``, which keeps
every stage equivariant to relabelling the agents.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nn import (
    GRUParams,
    LayerParams,
    ShapeError,
    Tensor,
    gcn_layer,
    gumbel_softmax,
    linear,
    recurrent_step,
    sample_gumbel,
)
from .nn import autodiff as T

WIDTH = 32
N_BLOCKS = 2
LABEL_DIM = 2


@dataclass
class GraphBlock:
    f_g: LayerParams
    gcn: LayerParams

    def parameters(self) -> list[Tensor]:
        return self.f_g.parameters() + self.gcn.parameters()


@dataclass
class ExecutorPolicy:
    n_agents: int
    obs_dim: int
    goal_dim: int
    n_actions: int
    f_o: LayerParams
    obs_gcn: LayerParams
    blocks: list[GraphBlock]
    f_goal: LayerParams
    f_state: LayerParams
    gru: GRUParams
    action_head: LayerParams
    value_head: LayerParams
    temperature: float = 1.0

    @classmethod
    def init(cls, n_agents: int, obs_dim: int, goal_dim: int, n_actions: int, rng: np.random.Generator,
             n_blocks: int = N_BLOCKS, temperature: float = 1.0) -> "ExecutorPolicy":
        g = np.sqrt(2.0)
        return cls(
            n_agents, obs_dim, goal_dim, n_actions,
            f_o=LayerParams.init("executor.f_o", obs_dim, WIDTH, rng, g),
            obs_gcn=LayerParams.init("executor.obs_gcn", WIDTH, WIDTH, rng, g),
            blocks=[GraphBlock(LayerParams.init(f"executor.block{b}.f_g", WIDTH, WIDTH, rng, 1.0),
                               LayerParams.init(f"executor.block{b}.gcn", WIDTH, WIDTH, rng, g))
                    for b in range(n_blocks)],
            f_goal=LayerParams.init("executor.f_goal", goal_input_dim(obs_dim, goal_dim), WIDTH, rng, g),
            f_state=LayerParams.init("executor.f_state", 2 * WIDTH, WIDTH, rng, g),
            gru=GRUParams.init("executor.gru", WIDTH, WIDTH, rng),
            action_head=LayerParams.init("executor.action_head", WIDTH, n_actions, rng, 0.01),
            value_head=LayerParams.init("executor.value_head", WIDTH, 1, rng, 1.0),
            temperature=temperature,
        )

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    def parameters(self) -> list[Tensor]:
        out = self.f_o.parameters() + self.obs_gcn.parameters()
        for b in self.blocks:
            out += b.parameters()
        out += self.f_goal.parameters() + self.f_state.parameters() + self.gru.parameters()
        return out + self.action_head.parameters() + self.value_head.parameters()

    def named_parameters(self) -> dict[str, Tensor]:
        return {p.name: p for p in self.parameters()}


def goal_input_dim(obs_dim: int, goal_dim: int) -> int:
    return goal_dim + obs_dim + LABEL_DIM


def goal_inputs(agent_obs: np.ndarray, goal: np.ndarray, label: np.ndarray) -> np.ndarray:
    """Per-agent goal-encoder input laid out as goal | own observation | reached label."""
    return np.concatenate([goal, agent_obs, label], axis=-1)


def fully_connected(n: int) -> np.ndarray:
    """All ones, self-loops included; the GCN's extra self-loop then weights each node's own feature double."""
    return np.ones((n, n))


@dataclass
class BlockTrace:
    adjacency: Tensor  # forward value of the neighbour selection, [B, N, N]
    soft: Tensor
    logits: Tensor


@dataclass
class ExecutorOutput:
    logits: Tensor  # [B, N, n_actions]
    value: Tensor  # [B, N]
    h_next: Tensor  # [B, N, WIDTH]
    noise: np.ndarray | None  # [B, n_blocks, N, N] Gumbel draws used, for replay
    blocks: list[BlockTrace] = field(default_factory=list)


def _batched(x, name: str, last: int | None = None) -> Tensor:
    x = T.as_tensor(x)
    if x.ndim != 3:
        raise ShapeError(f"{name} must be [batch, agents, features], got {x.shape}")
    if last is not None and x.shape[-1] != last:
        raise ShapeError(f"{name} feature size {x.shape[-1]} != {last}")
    return x


def encode_observations(policy: ExecutorPolicy, obs) -> Tensor:
    obs = _batched(obs, "observations", policy.obs_dim)
    n = obs.shape[1]
    x = T.relu(linear(policy.f_o, obs))
    return gcn_layer(x, fully_connected(n), policy.obs_gcn, "relu")


def neighbour_logits(block: GraphBlock, H: Tensor) -> Tensor:
    q = linear(block.f_g, H)
    return T.matmul(q, T.swapaxes(H, -1, -2)) * (1.0 / np.sqrt(H.shape[-1]))


def ego_subgraph_gcn(H: Tensor, A: Tensor, layer: LayerParams) -> Tensor:
    """Row k = node k's output of a GCN on the graph holding only row k of ``A`` (plus self-loops).

    In that subgraph node k has degree ``1 + sum_j A_kj`` and every other node
    degree 1, so the normalised coefficients are ``A_kj / sqrt(d_k)`` off the
    diagonal and ``(1 + A_kk) / d_k`` on it.
    """
    n = A.shape[-1]
    eye = np.eye(n)
    deg = A.sum(axis=-1) + 1.0
    inv_sqrt = T.reshape(T.power(deg, -0.5), deg.shape + (1,))
    inv = T.reshape(T.power(deg, -1.0), deg.shape + (1,))
    coeff = A * (1.0 - eye) * inv_sqrt + (A * eye + eye) * inv
    return T.relu(T.matmul(coeff, linear(layer, H)))


def graph_encoder_block(policy: ExecutorPolicy, H: Tensor, block_index: int, noise: np.ndarray | None = None,
                        hard: bool = True) -> tuple[Tensor, BlockTrace]:
    if not 0 <= block_index < policy.n_blocks:
        raise IndexError(f"block {block_index} out of range for {policy.n_blocks} blocks")
    block = policy.blocks[block_index]
    logits = neighbour_logits(block, H)
    sample = gumbel_softmax(logits, policy.temperature, noise=noise)
    A = sample.hard if hard else sample.soft
    return ego_subgraph_gcn(H, A, block.gcn), BlockTrace(A, sample.soft, logits)


def goal_encode(policy: ExecutorPolicy, goal_in) -> Tensor:
    goal_in = _batched(goal_in, "goal input", policy.f_goal.in_dim)
    return T.relu(linear(policy.f_goal, goal_in))


def state_extract(policy: ExecutorPolicy, e_goal: Tensor, e_graph: Tensor, h_prev) -> tuple[Tensor, Tensor]:
    """Fuse goal and graph features (in that order) and advance the GRU; returns (features, next hidden)."""
    h_prev = T.as_tensor(h_prev)
    if e_goal.shape != e_graph.shape:
        raise ShapeError(f"goal embedding {e_goal.shape} vs graph feature {e_graph.shape}")
    x = T.relu(linear(policy.f_state, T.concat([e_goal, e_graph], axis=-1)))
    h = recurrent_step(policy.gru, x, h_prev)
    return h, h


def action_logits(policy: ExecutorPolicy, features: Tensor) -> Tensor:
    return linear(policy.action_head, features)


def value(policy: ExecutorPolicy, features: Tensor) -> Tensor:
    v = linear(policy.value_head, features)
    return T.reshape(v, v.shape[:-1])


def draw_noise(policy: ExecutorPolicy, batch: int, rng: np.random.Generator) -> np.ndarray:
    n = policy.n_agents
    return sample_gumbel((batch, policy.n_blocks, n, n), rng)


def executor_forward(policy: ExecutorPolicy, obs, goal_in, h_prev, noise: np.ndarray | None = None,
                     rng: np.random.Generator | None = None, hard: bool = True) -> ExecutorOutput:
    """Full executor pass.

    Gumbel noise comes from ``noise`` if given, else is drawn from ``rng``;
    with neither the neighbour choice is the noise-free argmax.
    """
    obs = _batched(obs, "observations", policy.obs_dim)
    B, n = obs.shape[0], obs.shape[1]
    h_prev = _batched(h_prev, "hidden state", policy.gru.hidden)
    if h_prev.shape[:2] != (B, n):
        raise ShapeError(f"hidden state {h_prev.shape} does not match {B} x {n} agents")
    if noise is None and rng is not None:
        noise = draw_noise(policy, B, rng)
    if noise is not None and noise.shape != (B, policy.n_blocks, n, n):
        raise ShapeError(f"noise shape {noise.shape} != {(B, policy.n_blocks, n, n)}")
    H = encode_observations(policy, obs)
    traces = []
    for b in range(policy.n_blocks):
        H, trace = graph_encoder_block(policy, H, b, None if noise is None else noise[:, b], hard)
        traces.append(trace)
    e_goal = goal_encode(policy, goal_in)
    features, h_next = state_extract(policy, e_goal, H, h_prev)
    return ExecutorOutput(action_logits(policy, features), value(policy, features), h_next, noise, traces)


def act(logits: Tensor, rng: np.random.Generator | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Sample (or, without ``rng``, take the argmax of) each row's categorical; returns (actions, log-probs)."""
    logp = T.log_softmax(logits, axis=-1).data
    if rng is None:
        actions = np.argmax(logp, axis=-1)
    else:
        cdf = np.cumsum(np.exp(logp), axis=-1)
        u = rng.random(logp.shape[:-1] + (1,)) * cdf[..., -1:]
        actions = np.minimum((u >= cdf).sum(axis=-1), logp.shape[-1] - 1)
    chosen = np.take_along_axis(logp, actions[..., None], axis=-1)[..., 0]
    return actions.astype(np.int64), chosen


def action_log_prob(logits: Tensor, actions) -> tuple[Tensor, Tensor]:
    """Differentiable (log-prob of ``actions``, entropy) of the categorical over ``logits``."""
    logp = T.log_softmax(logits, axis=-1)
    actions = np.asarray(actions, dtype=np.int64)
    onehot = np.zeros(logp.shape)
    np.put_along_axis(onehot, actions[..., None], 1.0, axis=-1)
    chosen = (logp * onehot).sum(axis=-1)
    entropy = -(T.exp(logp) * logp).sum(axis=-1)
    return chosen, entropy
