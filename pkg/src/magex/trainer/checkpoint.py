"""Single-file run checkpoints: JSON header plus named parameter arrays in one ``.npz``."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..envs import EnvConfig
from .agents import Policies, build_policies
from .config import TrainConfig
from .normalizer import RunningNormalizer

FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(path: str | Path, policies: Policies, train_cfg: TrainConfig, extra: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "format_version": FORMAT_VERSION,
        "method": policies.method,
        "env": policies.env_cfg.to_dict(),
        "train": train_cfg.to_dict(),
        "obs_norm": policies.obs_norm.state_dict(),
        "goal_norm": policies.goal_norm.state_dict(),
        "extra": extra or {},
    }
    arrays = {f"param/{k}": v.data for k, v in policies.parameters().items()}
    tmp = path.with_suffix(".tmp.npz")
    np.savez(tmp, header=np.array(json.dumps(header, sort_keys=True)), **arrays)
    tmp.replace(path)
    return path


def read_header(path: str | Path) -> dict:
    with np.load(path, allow_pickle=False) as z:
        return json.loads(str(z["header"]))


def load_checkpoint(path: str | Path, env_cfg: EnvConfig | None = None) -> tuple[Policies, dict]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    with np.load(path, allow_pickle=False) as z:
        header = json.loads(str(z["header"]))
        params = {k[len("param/"):]: z[k] for k in z.files if k.startswith("param/")}
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"checkpoint format {header.get('format_version')} != supported {FORMAT_VERSION}")
    saved_env = EnvConfig.from_dict(header["env"])
    if env_cfg is not None:
        for key in ("task", "n_agents"):
            if getattr(env_cfg, key) != getattr(saved_env, key):
                raise CheckpointError(f"checkpoint was trained with {key}={getattr(saved_env, key)!s}, "
                                      f"requested {getattr(env_cfg, key)!s}")
    train_cfg = TrainConfig.from_dict(header["train"])
    policies = build_policies(header["method"], env_cfg or saved_env, train_cfg, np.random.default_rng(0))
    named = policies.parameters()
    if set(named) != set(params):
        raise CheckpointError(f"parameter set mismatch: missing {sorted(set(named) - set(params))}, "
                              f"unexpected {sorted(set(params) - set(named))}")
    for k, p in named.items():
        if p.data.shape != params[k].shape:
            raise CheckpointError(f"{k}: shape {params[k].shape} != {p.data.shape}")
        p.data = params[k].astype(np.float64)
    policies.obs_norm = RunningNormalizer.from_state(header["obs_norm"])
    policies.goal_norm = RunningNormalizer.from_state(header["goal_norm"])
    return policies, header
