"""Desk-scale environments and environment stepping."""

from __future__ import annotations

import warnings
from collections import deque
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from . import kernels
from .mdp import Mdp
from .rng import stream

Cell = tuple[int, int]

LEFT, RIGHT = 0, 1
UP, DOWN, WEST, EAST = 0, 1, 2, 3
GRID_MOVES = {UP: (-1, 0), DOWN: (1, 0), WEST: (0, -1), EAST: (0, 1)}


def garnet(num_states: int, num_actions: int, branching: int, gamma: float, seed: int) -> Mdp:
    """Random MDP: each ``(s, a)`` reaches ``branching`` distinct states with Dirichlet(1) weights."""
    if num_states < 1 or num_actions < 1:
        raise ValueError("num_states and num_actions must be positive")
    if not 1 <= branching <= num_states:
        raise ValueError(f"branching must lie in [1, {num_states}], got {branching}")
    rng = stream(seed, "garnet")
    P = np.zeros((num_states, num_actions, num_states))
    for s in range(num_states):
        for a in range(num_actions):
            succ = rng.choice(num_states, size=branching, replace=False)
            P[s, a, succ] = rng.dirichlet(np.ones(branching))
    P /= P.sum(axis=2, keepdims=True)
    r = rng.random((num_states, num_actions))
    rho = np.full(num_states, 1.0 / num_states)
    return Mdp(P, r, rho, gamma)


def chain_mdp(length: int, slip: float = 0.0, gamma: float = 0.99) -> Mdp:
    """Chain with actions left/right; the last state is absorbing and pays reward 1."""
    if length < 2:
        raise ValueError("length must be at least 2")
    if not 0.0 <= slip <= 0.5:
        raise ValueError("slip must lie in [0, 0.5]")
    n = length
    P = np.zeros((n, 2, n))
    for s in range(n - 1):
        left, right = max(s - 1, 0), min(s + 1, n - 1)
        P[s, RIGHT, right] += 1.0 - slip
        P[s, RIGHT, left] += slip
        P[s, LEFT, left] += 1.0 - slip
        P[s, LEFT, right] += slip
    P[n - 1, :, n - 1] = 1.0
    r = np.zeros((n, 2))
    r[n - 1] = 1.0
    rho = np.zeros(n)
    rho[0] = 1.0
    return Mdp(P, r, rho, gamma)


@dataclass(frozen=True)
class GridLayout:
    """Free cells of a grid in row-major order; ``cells[i]`` is state ``i``."""

    width: int
    height: int
    cells: tuple[Cell, ...]

    def state(self, cell: Cell) -> int:
        return self.cells.index(tuple(cell))


def grid_layout(width: int, height: int, obstacles: Iterable[Cell] = ()) -> GridLayout:
    blocked = {tuple(c) for c in obstacles}
    cells = tuple((row, col) for row in range(height) for col in range(width) if (row, col) not in blocked)
    return GridLayout(width, height, cells)


def rescale_rewards(values: Iterable[float]) -> tuple[float, float]:
    """Affine map ``x -> scale * x + shift`` sending the given rewards into [0, 1].

    The identity is returned when they already lie there.
    """
    vals = np.asarray(list(values), dtype=float)
    lo, hi = float(vals.min()), float(vals.max())
    if lo >= 0.0 and hi <= 1.0:
        return 1.0, 0.0
    if hi == lo:
        return 0.0, 1.0 if hi > 1.0 else 0.0
    return 1.0 / (hi - lo), -lo / (hi - lo)


def gridworld(
    width: int,
    height: int,
    goal: Cell,
    obstacles: Iterable[Cell] = (),
    step_reward: float = 0.0,
    goal_reward: float = 1.0,
    gamma: float = 0.9,
    start: Cell | None = None,
) -> Mdp:
    """Deterministic 4-action grid on ``(row, col)`` cells; the goal is absorbing.

    Every action taken in the goal cell pays ``goal_reward``; every other
    action pays ``step_reward``. Both are mapped affinely into [0, 1] if
    needed. Moves into walls or obstacles leave the agent in place. The start
    distribution is a point mass on ``start`` when given, otherwise uniform
    over the free non-goal cells.
    """
    layout = grid_layout(width, height, obstacles)
    goal = tuple(goal)
    if goal not in layout.cells:
        raise ValueError(f"goal {goal} is outside the grid or on an obstacle")
    index = {c: i for i, c in enumerate(layout.cells)}
    S = len(layout.cells)
    g = index[goal]
    P = np.zeros((S, 4, S))
    for i, (row, col) in enumerate(layout.cells):
        for a, (dr, dc) in GRID_MOVES.items():
            j = index.get((row + dr, col + dc), i)
            P[i, a, j] = 1.0
    P[g] = 0.0
    P[g, :, g] = 1.0

    scale, shift = rescale_rewards([step_reward, goal_reward])
    r = np.full((S, 4), scale * step_reward + shift)
    r[g] = scale * goal_reward + shift

    if start is not None:
        start = tuple(start)
        if start not in index:
            raise ValueError(f"start {start} is outside the grid or on an obstacle")
        rho = np.zeros(S)
        rho[index[start]] = 1.0
    else:
        rho = np.array([0.0 if i == g else 1.0 for i in range(S)])
        rho = rho / rho.sum() if rho.sum() > 0 else np.eye(S)[g]

    dist = grid_distances(P, g)
    if np.any(dist < 0):
        warnings.warn("some cells cannot reach the goal", RuntimeWarning, stacklevel=2)
    return Mdp(P, r, rho, gamma)


def grid_distances(transition: np.ndarray, goal: int) -> np.ndarray:
    """Fewest moves from each state to ``goal`` under deterministic dynamics, ``-1`` if unreachable."""
    S = transition.shape[0]
    preds: list[set[int]] = [set() for _ in range(S)]
    for s, a, s2 in zip(*np.nonzero(transition)):
        preds[s2].add(int(s))
    dist = np.full(S, -1, dtype=np.int64)
    dist[goal] = 0
    queue = deque([goal])
    while queue:
        s = queue.popleft()
        for p in preds[s]:
            if dist[p] < 0:
                dist[p] = dist[s] + 1
                queue.append(p)
    return dist


def env_step(mdp: Mdp, state: int, action: int, rng: np.random.Generator) -> tuple[int, float]:
    """Sample a successor by inverse CDF and return it with ``r(s, a)``."""
    cdf = kernels.cdf_rows(mdp.transition[state, action])
    nxt = int(np.searchsorted(cdf, rng.random(), side="right"))
    return nxt, float(mdp.reward[state, action])


def make_env(name: str, **params) -> Mdp:
    """Build an environment by name: ``garnet``, ``chain``, ``gridworld`` or ``json``."""
    if name == "garnet":
        return garnet(**params)
    if name == "chain":
        return chain_mdp(**params)
    if name == "gridworld":
        p = dict(params)
        p["goal"] = tuple(p["goal"])
        p["obstacles"] = [tuple(c) for c in p.get("obstacles", [])]
        if p.get("start") is not None:
            p["start"] = tuple(p["start"])
        return gridworld(**p)
    if name == "json":
        return Mdp.load_json(params["path"])
    raise ValueError(f"unknown environment {name!r}")
