from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .autodiff import Tensor


@dataclass
class AdamState:
    lr: float
    eps: float = 1e-5
    betas: tuple[float, float] = (0.9, 0.999)
    max_grad_norm: float | None = 10.0
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    def state_dict(self) -> dict:
        return {"lr": self.lr, "eps": self.eps, "betas": list(self.betas),
                "max_grad_norm": self.max_grad_norm, "step": self.step}


def global_norm(grads: Sequence[np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))


def clip_by_global_norm(grads: Sequence[np.ndarray], max_norm: float) -> tuple[list[np.ndarray], float]:
    norm = global_norm(grads)
    if norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        return [g * scale for g in grads], norm
    return list(grads), norm


def adam_update(state: AdamState, params: Sequence[Tensor],
                grads: Sequence[np.ndarray] | None = None) -> float:
    """One bias-corrected Adam step, in place on ``params[i].data``.

    Gradients are clipped to ``state.max_grad_norm`` by global norm first.
    No weight decay. Returns the pre-clip global gradient norm.
    """
    if grads is None:
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]
    if len(grads) != len(params):
        raise ValueError("params and grads differ in length")
    for p, g in zip(params, grads):
        if g.shape != p.shape:
            raise ValueError(f"gradient for {p.name!r} has shape {g.shape}, expected {p.shape}")
        if not np.all(np.isfinite(g)):
            bad = int(np.sum(~np.isfinite(g)))
            raise FloatingPointError(f"non-finite gradient in parameter {p.name!r} ({bad} entries)")
    if state.max_grad_norm is not None:
        grads, norm = clip_by_global_norm(grads, state.max_grad_norm)
    else:
        norm = global_norm(grads)
    if not state.m:
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
    b1, b2 = state.betas
    state.step += 1
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for i, (p, g) in enumerate(zip(params, grads)):
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g
        m_hat = state.m[i] / c1
        v_hat = state.v[i] / c2
        p.data = p.data - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return norm


def zero_grads(params: Sequence[Tensor]) -> None:
    for p in params:
        p.zero_grad()
