import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from voxagent.actions import NavAction
from voxagent.core import StateRepr, Yaw
from voxagent.vin import (
    VinAction,
    VinConfig,
    VinGrid,
    build_vin_grid,
    greedy_action,
    map_action,
    state_rewards,
    value_iteration,
)

# expected values from the dense transition-matrix oracle in test_acceptance.py
CORRIDOR_Q = np.array(
    [
        [0.978841312852292, 0.988516151784653, 0.978841312852292, 0.978841312852292, 0.001],
        [0.989153854564803, 0.999138504586981, 0.989153854564803, 0.979479015632442, 0.001],
        [0.0, 0.0, 0.0, 0.0, 0.001],
    ]
)
MIXED_Q = np.array(
    [
        [[-0.789905007120588, 0.92800704044953, 0.883323805320844, 0.883323805320844, 0.001], [0, 0, 0, 0, 0.001]],
        [[0.977066367556123, 0.94697841512624, 0.94697841512624, 0.902295179997555, -0.019], [0, 0, 0, 0, 0.001]],
    ]
)


def grid_of(obstacle, goal, unobserved=None):
    obstacle = np.asarray(obstacle, bool)
    unobserved = np.zeros_like(obstacle) if unobserved is None else np.asarray(unobserved, bool)
    return VinGrid(obstacle, unobserved, np.asarray(goal, bool))


def test_corridor_matches_frozen_oracle():
    q = value_iteration(grid_of([[0], [0], [0]], [[0], [0], [1]]), VinConfig())
    assert np.abs(q[:, 0, :] - CORRIDOR_Q).max() < 1e-12


def test_mixed_cells_match_frozen_oracle():
    g = grid_of([[0, 1], [0, 0]], [[0, 0], [0, 1]], [[0, 0], [1, 0]])
    q = value_iteration(g, VinConfig())
    assert np.abs(q - MIXED_Q).max() < 1e-12
    # the unobserved cell pays its penalty even when stopping
    assert q[1, 0, 4] == pytest.approx(-0.02 + 0.001)


def test_boxed_in_agent_stops():
    ob = np.zeros((5, 5), bool)
    ob[1, 2] = ob[3, 2] = ob[2, 1] = ob[2, 3] = True
    goal = np.zeros((5, 5), bool)
    goal[4, 4] = True
    q = value_iteration(grid_of(ob, goal), VinConfig())
    assert greedy_action(q, (2, 2)) is VinAction.STOP


def test_cell_can_be_obstacle_and_goal():
    g = grid_of([[0, 1]], [[0, 1]])
    r = state_rewards(g, VinConfig())
    assert r[0, 1] == pytest.approx(0.1)
    q = value_iteration(g, VinConfig(epsilon=0.0))
    assert greedy_action(q, (0, 0)) is VinAction.NORTH


def test_ties_prefer_north_then_east():
    q = np.zeros((1, 1, 5))
    q[0, 0, 1] = q[0, 0, 2] = 1.0
    assert greedy_action(q, (0, 0)) is VinAction.EAST


@pytest.mark.parametrize(
    "heading, move, expect",
    [
        (Yaw.NORTH, VinAction.NORTH, NavAction.MOVE_AHEAD),
        (Yaw.NORTH, VinAction.WEST, NavAction.ROTATE_LEFT),
        (Yaw.NORTH, VinAction.SOUTH, NavAction.ROTATE_RIGHT),
        (Yaw.EAST, VinAction.NORTH, NavAction.ROTATE_LEFT),
        (Yaw.SOUTH, VinAction.EAST, NavAction.ROTATE_LEFT),
        (Yaw.WEST, VinAction.WEST, NavAction.MOVE_AHEAD),
        (Yaw.WEST, VinAction.EAST, NavAction.ROTATE_RIGHT),
    ],
)
def test_action_table(heading, move, expect):
    assert map_action(heading, move) is expect


def test_stop_has_no_navigation_action():
    with pytest.raises(ValueError):
        map_action(Yaw.NORTH, VinAction.STOP)


def test_build_grid_from_map(grid):
    g = grid.with_dims(4, 3, 10)
    s = StateRepr.empty(g)
    wall = g.class_index("Wall")
    s.semantic[0, 0, 2, wall] = 0.9
    s.semantic[1, 1, 8, wall] = 0.9  # 2.0 m, above the range
    s.observed[2, 2, 0] = True
    vg = build_vin_grid(s, (3, 0), VinConfig(), g)
    assert np.argwhere(vg.obstacle).tolist() == [[0, 0]]
    assert np.argwhere(vg.goal).tolist() == [[3, 0]]
    assert np.argwhere(~vg.unobserved).tolist() == [[2, 2]]
    with pytest.raises(ValueError):
        build_vin_grid(s, (4, 0), VinConfig(), g)


def test_empty_observed_map(grid):
    g = grid.with_dims(6, 6, 4)
    s = StateRepr.empty(g)
    s.observed[:] = True
    vg = build_vin_grid(s, (5, 5), VinConfig(), g)
    assert vg.obstacle.sum() == 0 and vg.unobserved.sum() == 0 and vg.goal.sum() == 1


def test_config_validation():
    with pytest.raises(ValueError):
        VinConfig(epsilon=1.0)
    with pytest.raises(ValueError):
        VinConfig(iterations=0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_q_is_bounded_and_terminals_are_fixed(seed):
    rng = np.random.default_rng(seed)
    w, h = rng.integers(2, 10, size=2)
    ob = rng.random((w, h)) < 0.3
    goal = np.zeros((w, h), bool)
    goal[rng.integers(w), rng.integers(h)] = True
    q = value_iteration(grid_of(ob, goal, rng.random((w, h)) < 0.3), VinConfig())
    term = ob | goal
    assert (q[term, :4] == 0).all() and (q[term, 4] == 0.001).all()
    assert q.max() <= 1.0 + 1e-12 and q.min() >= -0.9 - 0.02 - 1.0
