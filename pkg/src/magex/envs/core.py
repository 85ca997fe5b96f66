"""Navigation simulators: Simple Spread, Push Ball, and point-mass Drone.

All transitions are pure functions of (state, actions, cfg); randomness only
enters at :func:`reset`. Landmark ``j`` counts as reached once its claimant
is within ``reach_radius``: the agent assigned to it when an assignment is
set, otherwise any agent (Push Ball: any agent carrying a ball).
"""

from __future__ import annotations

import dataclasses
import functools
from dataclasses import dataclass, field

import numpy as np

from .config import (
    DRONE_ACCEL,
    DRONE_HALF_EXTENT,
    DRONE_MAX_SPEED,
    DRONE_PHYSICS_HZ,
    DRONE_SUBSTEPS,
    DRONE_Z_RANGE,
    EnvConfig,
    Task,
)
from .spawn import spawn

MPE_ACTIONS = ("Up", "Down", "Left", "Right")
MPE_DIRECTIONS = np.array([[0.0, 1.0], [0.0, -1.0], [-1.0, 0.0], [1.0, 0.0]])
# Drone action index = 9*(ax+1) + 3*(ay+1) + (az+1) with each axis in {-1 Backward, 0 Stop, +1 Forward}
DRONE_DIRECTIONS = np.array([[ax, ay, az] for ax in (-1, 0, 1) for ay in (-1, 0, 1) for az in (-1, 0, 1)],
                            dtype=np.float64)
DRONE_STOP = 13


class UnsupportedMetric(RuntimeError):
    pass


@dataclass
class WorldState:
    agent_pos: np.ndarray
    agent_vel: np.ndarray
    goal_pos: np.ndarray
    reached: np.ndarray  # per landmark, monotone within an episode
    crashed: np.ndarray
    t: int = 0
    ball_pos: np.ndarray | None = None
    ball_attached: np.ndarray | None = None  # per ball
    ball_owner: np.ndarray | None = None  # per agent: index of carried ball or -1
    assignment: np.ndarray | None = None  # agent -> landmark
    ball_assignment: np.ndarray | None = None  # agent -> ball
    collisions: np.ndarray | None = None  # per-agent collision events of the transition that produced this state

    @property
    def n(self) -> int:
        return len(self.agent_pos)

    def copy(self) -> "WorldState":
        kw = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            kw[f.name] = v.copy() if isinstance(v, np.ndarray) else v
        return WorldState(**kw)

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            out[f.name] = v.tolist() if isinstance(v, np.ndarray) else v
        return out


@dataclass
class Observation:
    """Per-agent observation arrays.

    ``agent`` rows are laid out as: own position, the other agents' positions
    in index order, then task extras (Push Ball: assigned ball position and
    a carrying flag; Drone: own velocity). ``goal`` is the current target and
    ``label`` the one-hot reached flag ([1, 0] not yet, [0, 1] reached).
    """

    agent: np.ndarray  # [N, obs_dim]
    goal: np.ndarray  # [N, dim]
    label: np.ndarray  # [N, 2]

    def flat(self) -> np.ndarray:
        """[N, obs_dim + dim + 2] in the order agent | goal | label."""
        return np.concatenate([self.agent, self.goal, self.label], axis=1)


@dataclass
class StepResult:
    state: WorldState
    observations: Observation
    rewards: np.ndarray
    done: bool
    info: dict = field(default_factory=dict)


def obs_dim(cfg: EnvConfig) -> int:
    n, d = cfg.n_agents, cfg.dim
    extra = {Task.SIMPLE_SPREAD: 0, Task.PUSH_BALL: 3, Task.DRONE: 3}[cfg.task]
    return n * d + extra


# -- reset / assignment ---------------------------------------------------

def reset(cfg: EnvConfig, seed: int | None = None) -> tuple[WorldState, Observation]:
    rng = np.random.default_rng(cfg.rng_seed if seed is None else seed)
    layout = spawn(cfg, rng)
    n, d = cfg.n_agents, cfg.dim
    state = WorldState(
        agent_pos=layout["agents"].astype(np.float64),
        agent_vel=np.zeros((n, d)),
        goal_pos=layout["goals"].astype(np.float64),
        reached=np.zeros(n, dtype=bool),
        crashed=np.zeros(n, dtype=bool),
    )
    if cfg.task is Task.PUSH_BALL:
        state.ball_pos = layout["balls"].astype(np.float64)
        state.ball_attached = np.zeros(n, dtype=bool)
        state.ball_owner = np.full(n, -1, dtype=np.int64)
    return state, observe(state, cfg)


def assign(state: WorldState, perm, ball_perm=None) -> WorldState:
    """Return a copy of ``state`` with agent -> landmark (and agent -> ball) assignments set."""
    out = state.copy()
    out.assignment = None if perm is None else np.asarray(perm, dtype=np.int64).copy()
    out.ball_assignment = None if ball_perm is None else np.asarray(ball_perm, dtype=np.int64).copy()
    return out


# -- observation ----------------------------------------------------------

def current_targets(state: WorldState, cfg: EnvConfig) -> np.ndarray:
    """Per-agent target position: assigned ball until carried, then assigned landmark."""
    n, d = cfg.n_agents, cfg.dim
    if state.assignment is None:
        return np.zeros((n, d))
    targets = state.goal_pos[state.assignment].copy()
    if cfg.task is Task.PUSH_BALL and state.ball_assignment is not None:
        fetching = state.ball_owner < 0
        targets[fetching] = state.ball_pos[state.ball_assignment[fetching]]
    return targets


def agent_reached(state: WorldState) -> np.ndarray:
    if state.assignment is None:
        return np.zeros(state.n, dtype=bool)
    return state.reached[state.assignment]


@functools.lru_cache(maxsize=None)
def _others_index(n: int) -> np.ndarray:
    """Row k lists every agent except k, in index order."""
    return np.array([[j for j in range(n) if j != k] for k in range(n)], dtype=np.int64).reshape(n, n - 1)


def _self_and_others(pos: np.ndarray) -> np.ndarray:
    n = len(pos)
    return np.concatenate([pos, pos[_others_index(n)].reshape(n, -1)], axis=1)


def observe(state: WorldState, cfg: EnvConfig) -> Observation:
    n = cfg.n_agents
    parts = [_self_and_others(state.agent_pos)]
    if cfg.task is Task.PUSH_BALL:
        ball = state.ball_pos[state.ball_assignment] if state.ball_assignment is not None else np.zeros((n, 2))
        parts += [ball, (state.ball_owner >= 0).astype(np.float64)[:, None]]
    elif cfg.task is Task.DRONE:
        parts.append(state.agent_vel)
    reached = agent_reached(state)
    label = np.stack([~reached, reached], axis=1).astype(np.float64)
    return Observation(np.concatenate(parts, axis=1), current_targets(state, cfg), label)


def flat_observation(state: WorldState, cfg: EnvConfig) -> np.ndarray:
    """Assignment-free per-agent observation for the flat baseline.

    Row k: own position, other agents in index order, all landmarks, landmark
    reached flags, then Push Ball balls and carrying flag, or Drone velocity.
    """
    n = cfg.n_agents
    shared = [state.goal_pos.reshape(-1), state.reached.astype(np.float64)]
    if cfg.task is Task.PUSH_BALL:
        shared.append(state.ball_pos.reshape(-1))
    parts = [_self_and_others(state.agent_pos), np.broadcast_to(np.concatenate(shared), (n, sum(map(len, shared))))]
    if cfg.task is Task.PUSH_BALL:
        parts.append((state.ball_owner >= 0).astype(np.float64)[:, None])
    elif cfg.task is Task.DRONE:
        parts.append(state.agent_vel)
    return np.concatenate(parts, axis=1)


def flat_obs_dim(cfg: EnvConfig) -> int:
    n, d = cfg.n_agents, cfg.dim
    base = n * d + n * d + n
    extra = {Task.SIMPLE_SPREAD: 0, Task.PUSH_BALL: 2 * n + 1, Task.DRONE: 3}[cfg.task]
    return base + extra


# -- dynamics -------------------------------------------------------------

def _pairs_within(pos: np.ndarray, radius: float, active: np.ndarray | None = None) -> list[tuple[int, int]]:
    n = len(pos)
    diff = pos[:, None, :] - pos[None, :, :]
    dist = np.sqrt((diff ** 2).sum(-1))
    close = dist < radius
    if active is not None:
        close &= active[:, None] & active[None, :]
    iu, ju = np.nonzero(np.triu(close, k=1))
    return list(zip(iu.tolist(), ju.tolist()))


def _bounce(pos: np.ndarray, pairs, radius: float) -> np.ndarray:
    """Reflect each overlap: a pair at distance d < r ends up 2r - d apart."""
    pos = pos.copy()
    for i, j in pairs:
        delta = pos[j] - pos[i]
        d = float(np.linalg.norm(delta))
        if d < radius:
            normal = delta / d if d > 0 else np.eye(pos.shape[1])[0]
            push = (radius - d)  # each side moves this far, total separation gain 2(r - d)
            pos[i] -= normal * push
            pos[j] += normal * push
    return pos


def _mpe_step(state: WorldState, actions: np.ndarray, cfg: EnvConfig) -> tuple[WorldState, np.ndarray]:
    s = state.copy()
    L = cfg.map_size
    s.agent_pos = s.agent_pos + cfg.step_size * MPE_DIRECTIONS[actions]
    s.agent_pos = np.clip(s.agent_pos, 0.0, L)
    pairs = _pairs_within(s.agent_pos, cfg.collision_radius)
    collisions = np.zeros(cfg.n_agents)
    for i, j in pairs:
        collisions[i] += 1
        collisions[j] += 1
    if pairs:
        s.agent_pos = np.clip(_bounce(s.agent_pos, pairs, cfg.collision_radius), 0.0, L)
    s.agent_vel = s.agent_pos - state.agent_pos
    s.collisions = collisions
    if cfg.task is Task.PUSH_BALL:
        _update_balls(s, cfg)
    _update_reached(s, cfg)
    return s, collisions


def _update_balls(s: WorldState, cfg: EnvConfig) -> None:
    r = cfg.reach_radius
    for k in range(cfg.n_agents):
        if s.ball_owner[k] >= 0:
            continue
        if s.ball_assignment is not None:
            candidates = [int(s.ball_assignment[k])]
        else:
            candidates = [int(b) for b in np.argsort(np.linalg.norm(s.ball_pos - s.agent_pos[k], axis=1),
                                                     kind="stable")]
        for b in candidates:
            if not s.ball_attached[b] and np.linalg.norm(s.ball_pos[b] - s.agent_pos[k]) <= r:
                s.ball_attached[b] = True
                s.ball_owner[k] = b
                break
    carrying = s.ball_owner >= 0
    s.ball_pos[s.ball_owner[carrying]] = s.agent_pos[carrying]


def _update_reached(s: WorldState, cfg: EnvConfig) -> None:
    r = cfg.reach_radius
    eligible = ~s.crashed
    if cfg.task is Task.PUSH_BALL:
        eligible = eligible & (s.ball_owner >= 0)
    if s.assignment is not None:
        dist = np.linalg.norm(s.agent_pos - s.goal_pos[s.assignment], axis=1)
        hit = eligible & (dist <= r)
        s.reached[s.assignment[hit]] = True
    else:
        dist = np.linalg.norm(s.agent_pos[:, None, :] - s.goal_pos[None, :, :], axis=-1)
        hit = (eligible[:, None] & (dist <= r)).any(axis=0)
        s.reached |= hit


def _drone_step(state: WorldState, actions: np.ndarray, cfg: EnvConfig) -> tuple[WorldState, np.ndarray]:
    s = state.copy()
    dt = 1.0 / DRONE_PHYSICS_HZ
    dirs = DRONE_DIRECTIONS[actions]
    norms = np.linalg.norm(dirs, axis=1, keepdims=True)
    target_vel = np.where(norms > 0, DRONE_MAX_SPEED * dirs / np.maximum(norms, 1e-12), 0.0)
    lo = np.array([-DRONE_HALF_EXTENT, -DRONE_HALF_EXTENT, DRONE_Z_RANGE[0]])
    hi = np.array([DRONE_HALF_EXTENT, DRONE_HALF_EXTENT, DRONE_Z_RANGE[1]])
    newly_crashed = np.zeros(cfg.n_agents, dtype=bool)
    for _ in range(DRONE_SUBSTEPS):
        live = ~s.crashed
        dv = target_vel - s.agent_vel
        dv_norm = np.linalg.norm(dv, axis=1, keepdims=True)
        max_dv = DRONE_ACCEL * dt
        dv = np.where(dv_norm > max_dv, dv * (max_dv / np.maximum(dv_norm, 1e-12)), dv)
        vel = s.agent_vel + dv
        speed = np.linalg.norm(vel, axis=1, keepdims=True)
        vel = np.where(speed > DRONE_MAX_SPEED, vel * (DRONE_MAX_SPEED / np.maximum(speed, 1e-12)), vel)
        pos = s.agent_pos + vel * dt
        clipped = np.clip(pos, lo, hi)
        vel = np.where(clipped != pos, 0.0, vel)
        s.agent_pos = np.where(live[:, None], clipped, s.agent_pos)
        s.agent_vel = np.where(live[:, None], vel, 0.0)
        for i, j in _pairs_within(s.agent_pos, cfg.collision_radius, active=~s.crashed):
            for k in (i, j):
                if not s.crashed[k]:
                    s.crashed[k] = True
                    newly_crashed[k] = True
        s.agent_vel[s.crashed] = 0.0
    s.collisions = newly_crashed.astype(np.float64)
    _update_reached(s, cfg)
    return s, s.collisions


def step(state: WorldState, actions, cfg: EnvConfig) -> StepResult:
    actions = np.asarray(actions)
    if actions.shape != (cfg.n_agents,):
        raise ValueError(f"expected {cfg.n_agents} actions, got shape {actions.shape}")
    if not np.issubdtype(actions.dtype, np.integer):
        if not np.all(actions == np.round(actions)):
            raise ValueError("actions must be integers")
        actions = actions.astype(np.int64)
    if np.any(actions < 0) or np.any(actions >= cfg.n_actions):
        raise ValueError(f"action index out of range [0, {cfg.n_actions}): {actions.tolist()}")
    if state.t >= cfg.horizon:
        raise RuntimeError("episode already finished; call reset")
    if cfg.task is Task.DRONE:
        after, collisions = _drone_step(state, actions, cfg)
    else:
        after, collisions = _mpe_step(state, actions, cfg)
    after.t = state.t + 1
    rewards = reward(state, actions, after, cfg)
    done = after.t >= cfg.horizon or (cfg.task is Task.DRONE and bool(after.crashed.all()))
    pair_events = collisions.sum() if cfg.task is Task.DRONE else collisions.sum() / 2
    info = {"success_rate": success_rate(after), "collision_count": int(pair_events)}
    return StepResult(after, observe(after, cfg), rewards, done, info)


# -- reward and metrics ---------------------------------------------------

def reward(before: WorldState, actions, after: WorldState, cfg: EnvConfig) -> np.ndarray:
    """alpha * completion bonus + beta * distance penalty + gamma * collision penalty, per agent.

    Collision events are read from ``after.collisions`` (MPE: pairs that came
    within the collision radius; Drone: agents newly crashed).
    """
    n = cfg.n_agents
    collisions = np.zeros(n) if after.collisions is None else after.collisions
    if after.assignment is not None:
        idx = after.assignment
        bonus = (after.reached[idx] & ~before.reached[idx]).astype(np.float64)
        dist = np.linalg.norm(after.agent_pos - current_targets(after, cfg), axis=1)
    else:
        newly = after.reached & ~before.reached
        d_al = np.linalg.norm(after.agent_pos[:, None, :] - after.goal_pos[None, :, :], axis=-1)
        bonus = ((d_al <= cfg.reach_radius) & newly[None, :]).sum(axis=1).astype(np.float64)
        # shared coverage term: every landmark's distance to its nearest agent
        dist = np.full(n, d_al.min(axis=0).sum() / n)
    r_b = bonus
    r_d = -dist / cfg.map_size
    r_c = -np.asarray(collisions, dtype=np.float64)
    return cfg.alpha * r_b + cfg.beta * r_d + cfg.gamma * r_c


def success_rate(state: WorldState) -> float:
    return float(np.count_nonzero(state.reached)) / len(state.reached)


def collision_rate(state: WorldState, cfg: EnvConfig | None = None) -> float:
    if cfg is not None and cfg.task is not Task.DRONE:
        raise UnsupportedMetric("collision rate is defined for the Drone task only")
    if cfg is None and state.agent_pos.shape[1] != 3:
        raise UnsupportedMetric("collision rate is defined for the Drone task only")
    return float(np.count_nonzero(state.crashed)) / len(state.crashed)
