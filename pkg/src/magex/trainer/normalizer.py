from __future__ import annotations

import numpy as np


class RunningNormalizer:
    """Running mean/variance over the leading axis, merged batch-wise (Chan et al. parallel update)."""

    def __init__(self, shape=(), eps: float = 1e-8, enabled: bool = True):
        self.shape = tuple(shape) if not isinstance(shape, int) else (shape,)
        self.eps = eps
        self.enabled = enabled
        self.mean = np.zeros(self.shape)
        self.var = np.ones(self.shape)
        self.count = 0.0

    def update(self, batch) -> None:
        if not self.enabled:
            return
        x = np.asarray(batch, dtype=np.float64).reshape((-1,) + self.shape)
        if len(x) == 0:
            return
        b_mean, b_var, b_n = x.mean(axis=0), x.var(axis=0), float(len(x))
        if self.count == 0:
            self.mean, self.var, self.count = b_mean, b_var, b_n
            return
        total = self.count + b_n
        delta = b_mean - self.mean
        m2 = self.var * self.count + b_var * b_n + delta ** 2 * self.count * b_n / total
        self.mean = self.mean + delta * b_n / total
        self.var = m2 / total
        self.count = total

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.var + self.eps)

    def normalize(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return (x - self.mean) / self.std if self.enabled else x

    def denormalize(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        return y * self.std + self.mean if self.enabled else y

    def scale(self, x) -> np.ndarray:
        """Divide by the running std without centering."""
        x = np.asarray(x, dtype=np.float64)
        return x / self.std if self.enabled else x

    def state_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "var": self.var.tolist(), "count": self.count,
                "enabled": self.enabled, "eps": self.eps, "shape": list(self.shape)}

    @classmethod
    def from_state(cls, d: dict) -> "RunningNormalizer":
        out = cls(tuple(d["shape"]), d["eps"], d["enabled"])
        out.mean = np.asarray(d["mean"], dtype=np.float64).reshape(out.shape)
        out.var = np.asarray(d["var"], dtype=np.float64).reshape(out.shape)
        out.count = float(d["count"])
        return out


class ReturnScaler:
    """Reward scaling by the running std of discounted returns, tracked per stream."""

    def __init__(self, stream_shape, gamma: float, enabled: bool = True):
        self.gamma = gamma
        self.returns = np.zeros(stream_shape)
        self.stats = RunningNormalizer((), enabled=enabled)

    @property
    def enabled(self) -> bool:
        return self.stats.enabled

    def observe(self, rewards: np.ndarray, dones: np.ndarray) -> None:
        """Feed a [T, *stream] block of raw rewards; ``dones[t]`` ends the return after step t."""
        for r, d in zip(rewards, dones):
            self.returns = self.returns * self.gamma + r
            self.stats.update(self.returns.reshape(-1))
            d = np.asarray(d, dtype=bool)
            d = d.reshape(d.shape + (1,) * (self.returns.ndim - d.ndim))  # per-env flags cover every agent
            self.returns = np.where(d, 0.0, self.returns)

    def scale(self, rewards) -> np.ndarray:
        return self.stats.scale(rewards)
