"""Layer primitives built on the tensor tape."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

from . import autodiff as T
from .autodiff import ShapeError, Tensor

ACTIVATIONS: dict[str, Callable[[Tensor], Tensor]] = {
    "relu": T.relu,
    "tanh": T.tanh,
    "identity": T.identity,
}


def orthogonal(in_dim: int, out_dim: int, rng: np.random.Generator, gain: float = 1.0) -> np.ndarray:
    """Orthogonal matrix of shape (in_dim, out_dim), same recipe as torch's ``orthogonal_``."""
    rows, cols = max(in_dim, out_dim), min(in_dim, out_dim)
    a = rng.standard_normal((rows, cols))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if in_dim < out_dim:
        q = q.T
    return gain * q


@dataclass
class LayerParams:
    name: str
    weight: Tensor
    bias: Tensor

    @classmethod
    def init(cls, name: str, in_dim: int, out_dim: int, rng: np.random.Generator,
             gain: float = 1.0) -> "LayerParams":
        w = orthogonal(in_dim, out_dim, rng, gain)
        return cls(name, Tensor(w, requires_grad=True, name=f"{name}.weight"),
                   Tensor(np.zeros(out_dim), requires_grad=True, name=f"{name}.bias"))

    @classmethod
    def zeros(cls, name: str, in_dim: int, out_dim: int) -> "LayerParams":
        return cls(name, Tensor(np.zeros((in_dim, out_dim)), requires_grad=True, name=f"{name}.weight"),
                   Tensor(np.zeros(out_dim), requires_grad=True, name=f"{name}.bias"))

    @property
    def in_dim(self) -> int:
        return self.weight.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[1]

    def parameters(self) -> list[Tensor]:
        return [self.weight, self.bias]


def linear(layer: LayerParams, x: Tensor) -> Tensor:
    x = T.as_tensor(x)
    if x.shape[-1] != layer.in_dim:
        raise ShapeError(f"layer {layer.name!r} expects last dim {layer.in_dim}, got {x.shape[-1]}")
    return T.matmul(x, layer.weight) + layer.bias


def mlp_forward(layers: Sequence[LayerParams], x: Tensor, activation: str = "relu",
                out_activation: str = "identity") -> Tensor:
    """Apply a chain of dense layers; ``activation`` between them, ``out_activation`` last."""
    for prev, nxt in zip(layers, layers[1:]):
        if prev.out_dim != nxt.in_dim:
            raise ShapeError(f"layer {nxt.name!r} in_dim {nxt.in_dim} != {prev.name!r} out_dim {prev.out_dim}")
    act, out_act = ACTIVATIONS[activation], ACTIVATIONS[out_activation]
    h = T.as_tensor(x)
    for i, layer in enumerate(layers):
        h = linear(layer, h)
        h = out_act(h) if i == len(layers) - 1 else act(h)
    return h


def normalized_adjacency(A) -> Tensor:
    """D^-1/2 (A + I) D^-1/2 with D the row degree of A + I. Works batched over leading dims."""
    A = T.as_tensor(A)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise ShapeError(f"adjacency must be square, got {A.shape}")
    if np.any(A.data < 0):
        raise ValueError("adjacency must be non-negative")
    n = A.shape[-1]
    A_hat = A + np.eye(n)
    deg = A_hat.sum(axis=-1)  # >= 1 by construction
    inv_sqrt = T.power(deg, -0.5)
    return A_hat * T.reshape(inv_sqrt, inv_sqrt.shape + (1,)) * T.reshape(inv_sqrt, inv_sqrt.shape[:-1] + (1, n))


def gcn_layer(H: Tensor, A, layer: LayerParams, activation: str = "relu") -> Tensor:
    """sigma(D^-1/2 (A+I) D^-1/2 H W + b) over node features ``H`` [..., N, F]."""
    H = T.as_tensor(H)
    A = T.as_tensor(A)
    if A.shape[-1] != A.shape[-2]:
        raise ShapeError(f"adjacency must be square, got {A.shape}")
    if H.shape[-2] != A.shape[-1]:
        raise ShapeError(f"{H.shape[-2]} nodes but adjacency is {A.shape}")
    return ACTIVATIONS[activation](T.matmul(normalized_adjacency(A), linear(layer, H)))


@dataclass
class GRUParams:
    """Gated recurrent cell: input and hidden projections for (reset, update, candidate)."""

    x2h: LayerParams
    h2h: LayerParams

    @classmethod
    def init(cls, name: str, in_dim: int, hidden: int, rng: np.random.Generator) -> "GRUParams":
        x2h = LayerParams(f"{name}.x2h",
                          Tensor(np.concatenate([orthogonal(in_dim, hidden, rng) for _ in range(3)], axis=1),
                                 requires_grad=True, name=f"{name}.x2h.weight"),
                          Tensor(np.zeros(3 * hidden), requires_grad=True, name=f"{name}.x2h.bias"))
        h2h = LayerParams(f"{name}.h2h",
                          Tensor(np.concatenate([orthogonal(hidden, hidden, rng) for _ in range(3)], axis=1),
                                 requires_grad=True, name=f"{name}.h2h.weight"),
                          Tensor(np.zeros(3 * hidden), requires_grad=True, name=f"{name}.h2h.bias"))
        return cls(x2h, h2h)

    @classmethod
    def zeros(cls, name: str, in_dim: int, hidden: int) -> "GRUParams":
        return cls(LayerParams.zeros(f"{name}.x2h", in_dim, 3 * hidden),
                   LayerParams.zeros(f"{name}.h2h", hidden, 3 * hidden))

    @property
    def hidden(self) -> int:
        return self.h2h.in_dim

    def parameters(self) -> list[Tensor]:
        return self.x2h.parameters() + self.h2h.parameters()


def recurrent_step(cell: GRUParams, x: Tensor, h_prev: Tensor) -> Tensor:
    x, h_prev = T.as_tensor(x), T.as_tensor(h_prev)
    H = cell.hidden
    if h_prev.shape[-1] != H:
        raise ShapeError(f"hidden size {h_prev.shape[-1]} != cell hidden {H}")
    if x.shape[:-1] != h_prev.shape[:-1]:
        raise ShapeError(f"batch dims differ: {x.shape} vs {h_prev.shape}")
    gx = linear(cell.x2h, x)
    gh = linear(cell.h2h, h_prev)
    r = T.sigmoid(gx[..., :H] + gh[..., :H])
    z = T.sigmoid(gx[..., H:2 * H] + gh[..., H:2 * H])
    n = T.tanh(gx[..., 2 * H:] + r * gh[..., 2 * H:])
    return (1.0 - z) * n + z * h_prev


softmax = T.softmax
log_softmax = T.log_softmax


class GumbelSample(NamedTuple):
    hard: Tensor  # exact one-hot rows forward, soft gradient backward
    soft: Tensor
    index: np.ndarray


def sample_gumbel(shape, rng: np.random.Generator) -> np.ndarray:
    u = rng.random(shape)
    return -np.log(-np.log(u + 1e-20) + 1e-20)


def gumbel_softmax(logits: Tensor, temperature: float, rng: np.random.Generator | None = None,
                   noise: np.ndarray | None = None) -> GumbelSample:
    """Straight-through Gumbel-softmax along the last axis.

    Pass ``noise`` to reuse a previously drawn Gumbel sample; pass neither
    ``rng`` nor ``noise`` for the noise-free (argmax) relaxation.
    """
    if not temperature > 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    logits = T.as_tensor(logits)
    if noise is None and rng is not None:
        noise = sample_gumbel(logits.shape, rng)
    y = logits if noise is None else logits + noise
    soft = T.softmax(y * (1.0 / temperature), axis=-1)
    idx = np.argmax(soft.data, axis=-1)
    hard = np.zeros_like(soft.data)
    np.put_along_axis(hard, idx[..., None], 1.0, axis=-1)
    return GumbelSample(T.straight_through(hard, soft), soft, idx)


def huber_loss(pred: Tensor, target, delta: float) -> Tensor:
    pred, target = T.as_tensor(pred), T.as_tensor(target)
    if pred.shape != target.shape:
        raise ShapeError(f"huber shapes differ: {pred.shape} vs {target.shape}")
    err = pred - target
    abs_err = np.abs(err.data)
    quad = 0.5 * err * err
    lin = delta * (T.where(err.data >= 0, err, -err) - 0.5 * delta)
    return T.where(abs_err <= delta, quad, lin).mean()
