"""Prioritized multi-agent A* on a grid, executed by a closed-loop waypoint follower.

Planning happens in grid time: each tick an agent moves to a 4-neighbour cell
or waits. Agents are planned one at a time, closest to its goal first, against
a reservation table of (cell, tick) claims and directed edge claims, so a
finished plan never puts two agents in one cell at one tick or swaps two
agents across one edge. An agent parks on its goal cell for the rest of the
plan once it arrives.

The env has no wait action. The follower steers each agent toward where the
plan says it should be at the next env step; when it already is there it
spends the step on half of a reversal pair (out, then back) in the direction
with the most clearance from other agents.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..assignment import distance_matrix, hungarian
from ..envs import EnvConfig, Task, WorldState
from ..envs.core import MPE_DIRECTIONS

CELLS_PER_SIDE = 20
Cell = tuple[int, int]

# grid moves in env action order (Up, Down, Left, Right) then wait
_MOVES: tuple[Cell, ...] = ((0, 1), (0, -1), (-1, 0), (1, 0), (0, 0))


@dataclass
class Reservations:
    """Space-time claims. ``parked[c] = t`` blocks cell ``c`` from tick ``t`` on."""

    vertex: dict[tuple[Cell, int], int] = field(default_factory=dict)
    edge: set[tuple[Cell, Cell, int]] = field(default_factory=set)  # (from, to, t): move from t to t + 1
    parked: dict[Cell, int] = field(default_factory=dict)
    last_claim: dict[Cell, int] = field(default_factory=dict)

    def blocked(self, cell: Cell, t: int) -> bool:
        if (cell, t) in self.vertex:
            return True
        p = self.parked.get(cell)
        return p is not None and t >= p

    def swap_blocked(self, a: Cell, b: Cell, t: int) -> bool:
        """Would moving a -> b between ticks t and t + 1 cross someone moving b -> a?"""
        return (b, a, t) in self.edge

    def claim_path(self, agent: int, path: list[Cell], park: bool) -> None:
        for t, c in enumerate(path):
            self.vertex[(c, t)] = agent
            self.last_claim[c] = max(self.last_claim.get(c, -1), t)
            if t + 1 < len(path) and path[t + 1] != c:
                self.edge.add((c, path[t + 1], t))
        if park:
            self.parked[path[-1]] = len(path) - 1


@dataclass
class GridPlan:
    """Per-agent cell sequences indexed by tick; finished agents hold their last cell."""

    cell_size: float
    n_cells: int
    paths: list[list[Cell]]
    goals: list[Cell]
    failed: np.ndarray
    assignment: np.ndarray
    order: list[int]

    @property
    def length(self) -> int:
        return max(len(p) for p in self.paths)

    def cell_at(self, agent: int, t: int) -> Cell:
        p = self.paths[agent]
        return p[min(t, len(p) - 1)]


def to_cell(pos, cell_size: float, n_cells: int) -> Cell:
    ij = np.clip(np.floor(np.asarray(pos, dtype=np.float64) / cell_size).astype(int), 0, n_cells - 1)
    return int(ij[0]), int(ij[1])


def cell_center(cell: Cell, cell_size: float) -> np.ndarray:
    return (np.asarray(cell, dtype=np.float64) + 0.5) * cell_size


def manhattan(a: Cell, b: Cell) -> int:
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


def space_time_astar(start: Cell, goal: Cell, res: Reservations, n_cells: int, max_t: int,
                     free: Callable[[Cell], bool] | None = None) -> list[Cell] | None:
    """Shortest wait-or-move path from ``start`` at tick 0 to ``goal`` that respects ``res``.

    The goal only counts once no later claim touches it, so the agent can park
    there. ``free`` optionally marks static obstacles. Returns the cell
    sequence (tick 0 .. arrival) or None past ``max_t``.
    """
    if res.parked.get(start, math.inf) <= 0:
        return None
    counter = 0
    frontier = [(manhattan(start, goal), 0, counter, start)]
    parent: dict[tuple[Cell, int], tuple[Cell, int] | None] = {(start, 0): None}
    while frontier:
        _, t, _, cell = heapq.heappop(frontier)
        if cell == goal and t > res.last_claim.get(goal, -1) and goal not in res.parked:
            path, node = [], (cell, t)
            while node is not None:
                path.append(node[0])
                node = parent[node]
            return path[::-1]
        if t >= max_t:
            continue
        for dx, dy in _MOVES:
            nxt = (cell[0] + dx, cell[1] + dy)
            if not (0 <= nxt[0] < n_cells and 0 <= nxt[1] < n_cells) or (free is not None and not free(nxt)):
                continue
            if (nxt, t + 1) in parent or res.blocked(nxt, t + 1) or res.swap_blocked(cell, nxt, t):
                continue
            parent[(nxt, t + 1)] = (cell, t)
            counter += 1
            heapq.heappush(frontier, (t + 1 + manhattan(nxt, goal), t + 1, counter, nxt))
    return None


def goal_cell(landmark, res: Reservations, cell_size: float, n_cells: int, reach: float) -> Cell:
    """The landmark's cell, or if someone already parks there, the nearest free cell still within reach."""
    home = to_cell(landmark, cell_size, n_cells)
    if home not in res.parked:
        return home
    near = [(home[0] + dx, home[1] + dy) for dx in (-1, 0, 1) for dy in (-1, 0, 1)]
    near = [c for c in near if 0 <= c[0] < n_cells and 0 <= c[1] < n_cells and c not in res.parked]
    dist = {c: float(np.linalg.norm(cell_center(c, cell_size) - landmark)) for c in near}
    ok = sorted((d, c) for c, d in dist.items() if d < reach)
    return ok[0][1] if ok else home


def grid_horizon(cfg: EnvConfig, cell_size: float) -> int:
    """Ticks an agent moving at full speed can cover within the episode."""
    return int(math.floor(cfg.horizon * cfg.step_size / cell_size + 1e-9))


def ma_astar(state: WorldState, cfg: EnvConfig, grid_resolution: float | None = None) -> GridPlan:
    """Plan every agent from its current cell to its assigned landmark's cell.

    Uses the state's assignment if it has one, else the Hungarian assignment on
    Euclidean distance. ``grid_resolution`` is the cell side length (default
    ``map_size / 20``).
    """
    if cfg.task is not Task.SIMPLE_SPREAD:
        raise ValueError(f"grid planner supports Simple Spread only, not {cfg.task.value}")
    cell_size = grid_resolution or cfg.map_size / CELLS_PER_SIDE
    n_cells = int(math.ceil(cfg.map_size / cell_size - 1e-9))
    perm = (np.asarray(state.assignment) if state.assignment is not None
            else hungarian(distance_matrix(state.agent_pos, state.goal_pos)).perm)
    targets = state.goal_pos[perm]
    starts = [to_cell(p, cell_size, n_cells) for p in state.agent_pos]
    goals = [to_cell(p, cell_size, n_cells) for p in targets]
    dist = np.linalg.norm(state.agent_pos - targets, axis=1)
    order = sorted(range(cfg.n_agents), key=lambda k: (dist[k], k))
    max_t = grid_horizon(cfg, cell_size)

    res = Reservations()
    for k, c in enumerate(starts):
        res.vertex.setdefault((c, 0), k)
    paths: list[list[Cell]] = [[c] for c in starts]
    failed = np.zeros(cfg.n_agents, dtype=bool)
    for k in order:
        goals[k] = goal_cell(targets[k], res, cell_size, n_cells, cfg.reach_radius)
        path = space_time_astar(starts[k], goals[k], res, n_cells, max_t)
        if path is None:
            failed[k] = True
            path = [starts[k]]
        paths[k] = path
        res.claim_path(k, path, park=True)
    return GridPlan(cell_size, n_cells, paths, goals, failed, perm.astype(np.int64), order)


def plan_conflicts(plan: GridPlan, from_tick: int = 1) -> list[tuple[str, int, int, int]]:
    """Every vertex or swap conflict between two agents, as (kind, tick, agent, agent).

    Tick 0 is skipped by default: the initial placement is given, and two
    agents may start inside one cell.
    """
    out = []
    n, horizon = len(plan.paths), plan.length
    for t in range(from_tick, horizon):
        for a in range(n):
            for b in range(a + 1, n):
                ca, cb = plan.cell_at(a, t), plan.cell_at(b, t)
                if ca == cb:
                    out.append(("vertex", t, a, b))
                elif t > 0 and plan.cell_at(a, t - 1) == cb and plan.cell_at(b, t - 1) == ca:
                    out.append(("swap", t, a, b))
    return out


def path_actions(path: list[Cell]) -> list[int | None]:
    """Grid moves as env action indices; None marks a wait tick."""
    out = []
    for a, b in zip(path, path[1:]):
        d = (b[0] - a[0], b[1] - a[1])
        out.append(None if d == (0, 0) else _MOVES.index(d))
    return out


class PlanFollower:
    """Turns one env's grid plan into env actions, one call per env step."""

    def __init__(self, plan: GridPlan, cfg: EnvConfig):
        self.plan = plan
        self.cfg = cfg
        self.ticks_per_step = cfg.step_size / plan.cell_size
        self.pending = np.full(cfg.n_agents, -1)  # second half of a reversal pair, if owed

    def waypoint(self, agent: int, tau: float) -> np.ndarray:
        """Plan position at fractional tick ``tau``, interpolating between cell centres."""
        t0 = int(math.floor(tau))
        a = cell_center(self.plan.cell_at(agent, t0), self.plan.cell_size)
        b = cell_center(self.plan.cell_at(agent, t0 + 1), self.plan.cell_size)
        return a + (tau - t0) * (b - a)

    def _reversal(self, agent: int, pos: np.ndarray) -> int:
        step, L = self.cfg.step_size, self.cfg.map_size
        others = np.delete(pos, agent, axis=0)
        best, best_clear = 0, -np.inf
        for a, d in enumerate(MPE_DIRECTIONS):
            p = pos[agent] + step * d
            if np.any(p < 0) or np.any(p > L):
                continue
            clear = np.min(np.linalg.norm(others - p, axis=1)) if len(others) else np.inf
            if clear > best_clear:
                best, best_clear = a, clear
        return best

    def __call__(self, state: WorldState) -> np.ndarray:
        pos = state.agent_pos
        tau = (state.t + 1) * self.ticks_per_step
        half = self.cfg.step_size / 2
        actions = np.zeros(self.cfg.n_agents, dtype=np.int64)
        for k in range(self.cfg.n_agents):
            gap = self.waypoint(k, tau) - pos[k]
            axis = int(np.argmax(np.abs(gap)))
            if abs(gap[axis]) >= half:
                actions[k] = (3 if gap[0] > 0 else 2) if axis == 0 else (0 if gap[1] > 0 else 1)
                self.pending[k] = -1
            elif self.pending[k] >= 0:
                actions[k] = self.pending[k]
                self.pending[k] = -1
            else:
                a = self._reversal(k, pos)
                actions[k] = a
                self.pending[k] = a ^ 1  # Up<->Down, Left<->Right
        return actions


def astar_controller(cfg: EnvConfig, grid_resolution: float | None = None):
    """Controller factory for batched evaluation; plans each env at its first step."""
    def make(n_envs: int):
        followers: list[PlanFollower | None] = [None] * n_envs

        def control(states, active):
            out = np.zeros((len(states), cfg.n_agents), dtype=np.int64)
            for e, s in enumerate(states):
                if not active[e]:
                    continue
                if followers[e] is None or s.t == 0:
                    followers[e] = PlanFollower(ma_astar(s, cfg, grid_resolution), cfg)
                out[e] = followers[e](s)
            return out

        return control

    return make
