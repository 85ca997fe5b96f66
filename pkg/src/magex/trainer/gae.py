from __future__ import annotations

import numpy as np


def gae(rewards, values, bootstrap_value, gamma: float, lam: float, dones=None) -> tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimates along axis 0.

    ``dones[t]`` marks that the episode ended with step t, so neither the next
    value nor later advantages leak across the boundary. ``bootstrap_value`` is
    the value of the state after the last step. Returns ``(advantages, returns)``
    with ``returns = advantages + values``.
    """
    r = np.asarray(rewards, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    if r.shape != v.shape:
        raise ValueError(f"rewards {r.shape} and values {v.shape} differ")
    T = len(r)
    d = np.zeros_like(r) if dones is None else np.broadcast_to(np.asarray(dones, dtype=np.float64)
                                                               .reshape(np.shape(dones) + (1,) * (r.ndim - np.ndim(dones))),
                                                               r.shape)
    next_v = np.asarray(bootstrap_value, dtype=np.float64) * np.ones(r.shape[1:])
    adv = np.zeros_like(r)
    running = np.zeros(r.shape[1:])
    for t in range(T - 1, -1, -1):
        live = 1.0 - d[t]
        delta = r[t] + gamma * next_v * live - v[t]
        running = delta + gamma * lam * live * running
        adv[t] = running
        next_v = v[t]
    return adv, adv + v
