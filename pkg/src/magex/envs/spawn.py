"""Spawn layouts.

Segment layouts are given in unit coordinates and scaled by the map size.
Each segment is thickened into a band of half-width ``BAND`` (unit
coordinates); a role samples uniformly over the union of its bands, choosing
a band in proportion to its length.
"""

from __future__ import annotations

import numpy as np

from .config import (
    DRONE_HALF_EXTENT,
    DRONE_SPAWN_Z,
    ConfigError,
    EnvConfig,
    SpawnMode,
    Task,
)

Segment = tuple[tuple[float, float], tuple[float, float]]

LO, HI, MID = 0.1, 0.9, 0.5
BAND = 0.075

_LEFT = ((LO, LO), (LO, HI))
_RIGHT = ((HI, LO), (HI, HI))
_BOTTOM = ((LO, LO), (HI, LO))
_TOP = ((LO, HI), (HI, HI))
_DIAG = ((LO, LO), (HI, HI))
_ANTI = ((LO, HI), (HI, LO))

SIMPLE_SPREAD_LAYOUTS: dict[SpawnMode, dict[str, list[Segment]]] = {
    SpawnMode.MODE1: {"agents": [_LEFT], "goals": [_RIGHT]},
    SpawnMode.MODE2: {"agents": [_BOTTOM], "goals": [_TOP]},
    SpawnMode.MODE3: {"agents": [_DIAG], "goals": [_ANTI]},
    SpawnMode.MODE4: {"agents": [_LEFT, _BOTTOM], "goals": [_RIGHT, _TOP]},
}

PUSH_BALL_LAYOUTS: dict[SpawnMode, dict[str, list[Segment]]] = {
    SpawnMode.MODE1: {"agents": [_LEFT, _RIGHT], "goals": [_LEFT, _RIGHT],
                      "balls": [((MID, LO), (MID, HI))]},
    SpawnMode.MODE2: {"agents": [_BOTTOM, _TOP], "goals": [_BOTTOM, _TOP],
                      "balls": [((LO, MID), (HI, MID))]},
    SpawnMode.MODE3: {"agents": [_LEFT, _RIGHT, _BOTTOM, _TOP], "goals": [_LEFT, _RIGHT, _BOTTOM, _TOP],
                      "balls": [((MID, 0.25), (MID, 0.75)), ((0.25, MID), (0.75, MID))]},
    SpawnMode.MODE4: {"agents": [_DIAG], "goals": [_ANTI],
                      "balls": [((0.25, 0.25), (0.75, 0.25)), ((0.25, 0.75), (0.75, 0.75))]},
}

MAX_TRIES = 2000


def _sample_separated(draw, n: int, min_sep: float, rng: np.random.Generator, what: str) -> np.ndarray:
    pts: list[np.ndarray] = []
    for _ in range(n):
        for _ in range(MAX_TRIES):
            p = draw(rng)
            if all(np.linalg.norm(p - q) >= min_sep for q in pts):
                pts.append(p)
                break
        else:
            raise ConfigError(f"could not place {n} {what} at separation {min_sep:.3g}")
    return np.array(pts)


def _segment_sampler(segments: list[Segment], scale: float):
    segs = np.asarray(segments, dtype=np.float64) * scale  # [S, 2, 2]
    axis = segs[:, 1] - segs[:, 0]
    lengths = np.linalg.norm(axis, axis=1)
    normals = np.stack([-axis[:, 1], axis[:, 0]], axis=1) / lengths[:, None]
    cum = np.concatenate([[0.0], np.cumsum(lengths)])
    half = BAND * scale

    def draw(rng):
        s, offset = rng.uniform(0.0, cum[-1]), rng.uniform(-half, half)
        k = min(int(np.searchsorted(cum, s, side="right")) - 1, len(segs) - 1)
        frac = (s - cum[k]) / lengths[k]
        return segs[k, 0] + frac * axis[k] + offset * normals[k]

    return draw, float(cum[-1]) * 2 * half


def _check_capacity_area(n: int, side: float, min_sep: float, what: str) -> None:
    # loose packing bound: n disks of diameter min_sep must fit in the square
    if n * min_sep ** 2 > side ** 2:
        raise ConfigError(f"{n} {what} cannot be separated by {min_sep:.3g} in a {side:g} map")


def spawn(cfg: EnvConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    n, L = cfg.n_agents, cfg.map_size
    sep = cfg.collision_radius  # closer than this would start the episode mid-collision
    if cfg.task is Task.DRONE:
        _check_capacity_area(n, 2 * DRONE_HALF_EXTENT, sep, "drones")

        def draw(r):
            xy = r.uniform(-DRONE_HALF_EXTENT, DRONE_HALF_EXTENT, size=2)
            return np.array([xy[0], xy[1], DRONE_SPAWN_Z])

        return {"agents": _sample_separated(draw, n, sep, rng, "drones"),
                "goals": _sample_separated(draw, n, sep, rng, "landmarks")}

    roles = ["agents", "goals"] + (["balls"] if cfg.task is Task.PUSH_BALL else [])
    mode = cfg.spawn_mode
    if mode is SpawnMode.ANY_MODE:
        mode = [SpawnMode.MODE1, SpawnMode.MODE2, SpawnMode.MODE3, SpawnMode.MODE4][int(rng.integers(4))]
    out = {}
    if mode is SpawnMode.RANDOM:
        _check_capacity_area(n, L, sep, "entities")
        for role in roles:
            out[role] = _sample_separated(lambda r: r.uniform(0.0, L, size=2), n, sep, rng, role)
        return out
    layouts = SIMPLE_SPREAD_LAYOUTS if cfg.task is Task.SIMPLE_SPREAD else PUSH_BALL_LAYOUTS
    for role in roles:
        draw, area = _segment_sampler(layouts[mode][role], L)
        if n * sep ** 2 > area:
            raise ConfigError(f"{mode.value}: {n} {role} do not fit in bands of area {area:.3g} "
                              f"at separation {sep:.3g}")
        out[role] = _sample_separated(draw, n, sep, rng, role)
    return out
