"""Line-delimited JSON trajectory dumps, one record per environment step."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterator

import numpy as np

from .core import WorldState


def step_record(t: int, state: WorldState, actions, rewards) -> dict:
    return {
        "t": int(t),
        "state": state.to_dict(),
        "actions": np.asarray(actions).tolist(),
        "rewards": np.asarray(rewards, dtype=np.float64).tolist(),
    }


class TrajectoryWriter:
    def __init__(self, path: str | Path, header: dict | None = None):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "w", encoding="utf-8")
        if header is not None:
            self._write({"header": header})

    def _write(self, rec: dict) -> None:
        self._fh.write(json.dumps(rec, sort_keys=True) + "\n")

    def write(self, t: int, state: WorldState, actions, rewards) -> None:
        self._write(step_record(t, state, actions, rewards))

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_trajectory(path: str | Path) -> tuple[dict | None, list[dict]]:
    header, steps = None, []
    for rec in iter_records(path):
        if "header" in rec:
            header = rec["header"]
        else:
            steps.append(rec)
    return header, steps


def iter_records(path: str | Path) -> Iterator[dict]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: malformed record ({exc.msg})") from exc
