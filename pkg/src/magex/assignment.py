"""Goal assignment engines: exact Hungarian, brute-force oracle, random baseline."""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass

import numpy as np

REWARD_FLOOR = -100.0
BRUTE_FORCE_MAX_N = 9


@dataclass(frozen=True)
class Assignment:
    perm: np.ndarray  # perm[i] = goal index of agent i
    total_cost: float

    def __post_init__(self):
        perm = np.asarray(self.perm, dtype=np.int64)
        if sorted(perm.tolist()) != list(range(len(perm))):
            raise ValueError(f"not a permutation: {perm.tolist()}")
        object.__setattr__(self, "perm", perm)


def _check_cost(cost) -> np.ndarray:
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ValueError(f"cost matrix must be square, got shape {cost.shape}")
    if np.any(cost < 0) or not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix must be finite and non-negative")
    return cost


def distance_matrix(agent_pos, goal_pos) -> np.ndarray:
    """Euclidean distance from every agent (rows) to every goal (columns)."""
    a = np.asarray(agent_pos, dtype=np.float64)
    g = np.asarray(goal_pos, dtype=np.float64)
    if a.shape != g.shape:
        raise ValueError(f"agent/goal position shapes differ: {a.shape} vs {g.shape}")
    return np.sqrt(((a[:, None, :] - g[None, :, :]) ** 2).sum(-1))


def assignment_cost(cost, perm) -> float:
    cost = np.asarray(cost, dtype=np.float64)
    return float(sum(cost[i, j] for i, j in enumerate(perm)))


def hungarian(cost) -> Assignment:
    """Minimum-cost perfect matching, O(n^3) shortest augmenting paths with potentials."""
    cost = _check_cost(cost)
    n = cost.shape[0]
    if n == 0:
        return Assignment(np.zeros(0, dtype=np.int64), 0.0)
    inf = np.inf
    # 1-based columns; column 0 is the virtual source of each augmentation
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    match = np.zeros(n + 1, dtype=np.int64)  # match[col] = row (1-based), 0 = free
    way = np.zeros(n + 1, dtype=np.int64)
    for row in range(1, n + 1):
        match[0] = row
        col0 = 0
        minv = np.full(n + 1, inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[col0] = True
            r = match[col0]
            reduced = cost[r - 1] - u[r] - v[1:]
            free = ~used[1:]
            better = free & (reduced < minv[1:])
            minv[1:][better] = reduced[better]
            way[1:][better] = col0
            masked = np.where(free, minv[1:], inf)
            col1 = int(np.argmin(masked)) + 1
            delta = masked[col1 - 1]
            u[match[used]] += delta
            v[used] -= delta
            minv[1:][free] -= delta
            col0 = col1
            if match[col0] == 0:
                break
        while col0:
            prev = way[col0]
            match[col0] = match[prev]
            col0 = prev
    perm = np.empty(n, dtype=np.int64)
    for col in range(1, n + 1):
        perm[match[col] - 1] = col - 1
    return Assignment(perm, assignment_cost(cost, perm))


@functools.lru_cache(maxsize=None)
def _permutation_table(n: int) -> np.ndarray:
    return np.array(list(itertools.permutations(range(n))), dtype=np.int64).reshape(-1, n)


def brute_force(cost) -> Assignment:
    """Exhaustive minimum over all permutations; ties go to the lexicographically smallest."""
    cost = _check_cost(cost)
    n = cost.shape[0]
    if n > BRUTE_FORCE_MAX_N:
        raise ValueError(f"brute force limited to n <= {BRUTE_FORCE_MAX_N}, got {n}")
    perms = _permutation_table(n)  # lexicographic order
    totals = cost[np.arange(n), perms].sum(axis=1)
    # re-sum near-minimal candidates in agent order so totals are bit-comparable
    near = np.flatnonzero(totals <= totals.min() + 1e-9 * max(1.0, abs(totals.min())))
    best, best_cost = None, np.inf
    for k in near:
        c = assignment_cost(cost, perms[k])
        if c < best_cost:
            best, best_cost = perms[k], c
    return Assignment(best.copy(), float(best_cost))


def random_assignment(n: int, rng: np.random.Generator, cost=None) -> Assignment:
    """Uniform random permutation by Fisher-Yates; cost is evaluated when a matrix is given."""
    if n < 1:
        raise ValueError("need at least one agent")
    perm = np.arange(n)
    for i in range(n - 1, 0, -1):
        j = int(rng.integers(0, i + 1))
        perm[i], perm[j] = perm[j], perm[i]
    total = assignment_cost(cost, perm) if cost is not None else float("nan")
    return Assignment(perm, total)


def commander_reward(c_assign: float, c_hungarian: float) -> float:
    """1 - C_c / C_h, floored at REWARD_FLOOR.

    With an exact solver C_c >= C_h, so the reward lies in [REWARD_FLOOR, 0].
    A zero optimal cost gives 0 for a zero-cost assignment and the floor otherwise.
    """
    if c_hungarian < 0 or c_assign < 0:
        raise ValueError("costs must be non-negative")
    if c_hungarian == 0.0:
        return 0.0 if c_assign == 0.0 else REWARD_FLOOR
    return max(1.0 - c_assign / c_hungarian, REWARD_FLOOR)
