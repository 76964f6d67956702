"""Parameter-free value-iteration planner on a 2D grid MDP."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .actions import NavAction
from .core import GridConfig, StateRepr, Yaw, occupied_columns


class VinAction(enum.IntEnum):
    NORTH = 0
    EAST = 1
    SOUTH = 2
    WEST = 3
    STOP = 4


# (dx, dy) for the four moves, in VinAction order
MOVES = ((0, 1), (1, 0), (0, -1), (-1, 0))


@dataclass(frozen=True)
class VinConfig:
    iterations: int = 122
    epsilon: float = 0.08
    discount: float = 0.99
    reward_obstacle: float = -0.9
    reward_goal: float = 1.0
    reward_unobserved: float = -0.02
    reward_stop: float = 0.001
    obstacle_height_range: tuple[float, float] = field(default=(0.0, 1.75))

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not 0 <= self.epsilon < 1:
            raise ValueError("epsilon must be in [0, 1)")
        if not 0 < self.discount <= 1:
            raise ValueError("discount must be in (0, 1]")


@dataclass(frozen=True, eq=False)
class VinGrid:
    obstacle: np.ndarray  # [W, H] bool
    unobserved: np.ndarray
    goal: np.ndarray

    def same_as(self, other: "VinGrid | None") -> bool:
        return (
            other is not None
            and np.array_equal(self.obstacle, other.obstacle)
            and np.array_equal(self.unobserved, other.unobserved)
            and np.array_equal(self.goal, other.goal)
        )

    @property
    def terminal(self) -> np.ndarray:
        return self.obstacle | self.goal


def build_vin_grid(state: StateRepr, goal: tuple[int, int], cfg: VinConfig, grid: GridConfig) -> VinGrid:
    gx, gy = goal
    if not (0 <= gx < grid.dims_x and 0 <= gy < grid.dims_y):
        raise ValueError(f"goal {goal} outside grid")
    obstacle = occupied_columns(state.semantic, grid, cfg.obstacle_height_range)
    unobserved = ~state.observed.any(axis=2)
    g = np.zeros_like(obstacle)
    g[gx, gy] = True
    return VinGrid(obstacle, unobserved, g)


def state_rewards(grid: VinGrid, cfg: VinConfig) -> np.ndarray:
    return (
        cfg.reward_obstacle * grid.obstacle
        + cfg.reward_goal * grid.goal
        + cfg.reward_unobserved * grid.unobserved
    )


def _neighbours(u: np.ndarray) -> list[np.ndarray]:
    """Value of the cell reached by each move; off-grid moves stay in place."""
    p = np.pad(u, 1, mode="edge")
    return [p[1 + dx : p.shape[0] - 1 + dx, 1 + dy : p.shape[1] - 1 + dy] for dx, dy in MOVES]


def value_iteration(grid: VinGrid, cfg: VinConfig) -> np.ndarray:
    """Q-function [W, H, 5] after `cfg.iterations` synchronous backups.

    A move collects the reward of the state it is taken in, then either lands
    on a terminal state (collecting that state's reward, episode over) or
    continues with the discounted value of the landing state. With probability
    epsilon the move is replaced by a uniformly random neighbour move. Stop is
    noise-free and ends the episode.
    """
    r = state_rewards(grid, cfg)
    terminal = grid.terminal
    eps = cfg.epsilon
    v = np.zeros_like(r)
    q = np.empty(r.shape + (5,))
    for _ in range(cfg.iterations):
        u = np.where(terminal, r, cfg.discount * v)
        nb = _neighbours(u)
        noise = (nb[0] + nb[1] + nb[2] + nb[3]) / 4
        for a in range(4):
            q[..., a] = r + (1 - eps) * nb[a] + eps * noise
        q[..., 4] = r + cfg.reward_stop
        q[terminal, :4] = 0.0
        q[terminal, 4] = cfg.reward_stop
        v = q.max(axis=-1)
    return q


def greedy_action(q: np.ndarray, cell: tuple[int, int]) -> VinAction:
    # np.argmax keeps the first maximum: North, East, South, West, Stop
    return VinAction(int(np.argmax(q[cell[0], cell[1]])))


_ACTION_TABLE = {
    (Yaw.NORTH, VinAction.WEST): NavAction.ROTATE_LEFT,
    (Yaw.NORTH, VinAction.NORTH): NavAction.MOVE_AHEAD,
    (Yaw.NORTH, VinAction.EAST): NavAction.ROTATE_RIGHT,
    (Yaw.NORTH, VinAction.SOUTH): NavAction.ROTATE_RIGHT,
    (Yaw.EAST, VinAction.NORTH): NavAction.ROTATE_LEFT,
    (Yaw.EAST, VinAction.EAST): NavAction.MOVE_AHEAD,
    (Yaw.EAST, VinAction.SOUTH): NavAction.ROTATE_RIGHT,
    (Yaw.EAST, VinAction.WEST): NavAction.ROTATE_RIGHT,
    (Yaw.SOUTH, VinAction.EAST): NavAction.ROTATE_LEFT,
    (Yaw.SOUTH, VinAction.SOUTH): NavAction.MOVE_AHEAD,
    (Yaw.SOUTH, VinAction.WEST): NavAction.ROTATE_RIGHT,
    (Yaw.SOUTH, VinAction.NORTH): NavAction.ROTATE_RIGHT,
    (Yaw.WEST, VinAction.SOUTH): NavAction.ROTATE_LEFT,
    (Yaw.WEST, VinAction.WEST): NavAction.MOVE_AHEAD,
    (Yaw.WEST, VinAction.NORTH): NavAction.ROTATE_RIGHT,
    (Yaw.WEST, VinAction.EAST): NavAction.ROTATE_RIGHT,
}


def map_action(heading: Yaw, vin_action: VinAction) -> NavAction:
    if vin_action is VinAction.STOP:
        raise ValueError("Stop has no environment action; the caller handles it")
    return _ACTION_TABLE[(Yaw(heading), VinAction(vin_action))]
