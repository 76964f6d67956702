import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from voxagent.core import (
    FEATURE_CHANNELS,
    GridConfig,
    Pose,
    StateRepr,
    Subgoal,
    SubgoalType,
    Yaw,
    affordance_features,
    allo_transform,
    ego_transform,
    empty_history,
    load_class_table,
    occupied_columns,
    state_summary,
    update_history_tensor,
)


def test_yaw_turns_clockwise():
    assert Yaw.NORTH.right() is Yaw.EAST
    assert Yaw.NORTH.left() is Yaw.WEST
    assert [y.offset for y in Yaw] == [(0, 1), (1, 0), (0, -1), (-1, 0)]


def test_subgoal_labels_round_trip():
    for t in SubgoalType:
        assert SubgoalType.from_label(t.label) is t
    with pytest.raises(ValueError):
        SubgoalType.from_label("Juggle")


def test_class_table_loads(grid):
    assert grid.class_names[0] == "Background"
    assert grid.shape == (61, 61, 10)
    assert grid.voxel_size == 0.25
    assert grid.has_affordance("Microwave", "openable")
    assert {"Floor", "Rug"} <= set(grid.class_names)
    assert len(load_class_table()) == grid.num_classes


def test_class_table_needs_one_placement_decision():
    with pytest.raises(ValueError, match="exactly one"):
        GridConfig.from_table([{"name": "Thing", "affordances": ["ground", "obstacle"]}])


@pytest.mark.parametrize("dims", [(0, 5, 5), (5, -1, 5)])
def test_grid_rejects_bad_dims(grid, dims):
    with pytest.raises(ValueError):
        grid.with_dims(*dims)


def test_height_slice(grid):
    # voxels whose lower face lies in [0, 1.75): z = 0..6
    assert grid.height_slice(0.0, 1.75) == slice(0, 7)
    assert grid.height_slice(0.5, 1.0) == slice(2, 4)


def test_pose_validation(grid):
    with pytest.raises(ValueError):
        Pose(1, 1, Yaw.NORTH, 45)
    with pytest.raises(ValueError):
        Pose(61, 0).validate(grid)
    assert Pose(3, 4, 2).yaw is Yaw.SOUTH


def test_stop_subgoal_has_no_argument(small_grid):
    with pytest.raises(ValueError):
        Subgoal(SubgoalType.STOP, 3, np.zeros(small_grid.shape))
    assert Subgoal.stop(small_grid).is_stop


def test_microwave_column_features(grid):
    g = grid.with_dims(4, 4, 6)
    st_ = StateRepr.empty(g)
    st_.semantic[1, 2, 3, g.class_index("Microwave")] = 0.9
    st_.semantic[0, 0, 0, g.class_index("Floor")] = 0.5  # not above threshold
    st_.observed[1, 2, 0] = True
    f = affordance_features(st_, g)
    assert f.shape == (7, 4, 4)
    col = dict(zip(FEATURE_CHANNELS, f[:, 1, 2]))
    assert col == {"pickable": 0, "receptacle": 1, "togglable": 1, "openable": 1, "ground": 0, "obstacle": 1, "observed": 1}
    assert f[:, 0, 0].sum() == 0
    assert f.sum() == 5


def test_obstacle_above_height_range_ignored(grid):
    g = grid.with_dims(3, 3, 10)
    sem = np.zeros(g.shape + (g.num_classes,), dtype=np.float32)
    sem[0, 0, 8, g.class_index("Wall")] = 0.9  # 2.0 m
    sem[1, 1, 3, g.class_index("Wall")] = 0.9
    occ = occupied_columns(sem, g)
    assert occ.tolist() == [[False, False, False], [False, True, False], [False, False, False]]


def test_state_summary_is_inventory_then_spatial_max(small_grid):
    s = StateRepr.empty(small_grid)
    s.inventory[4] = 1
    s.semantic[2, 2, 2, 7] = 0.25
    s.semantic[3, 1, 0, 7] = 0.75
    v = state_summary(s)
    c = small_grid.num_classes
    assert v.shape == (2 * c,)
    assert v[4] == 1 and v[:c].sum() == 1
    assert v[c + 7] == 0.75 and v[c:].sum() == 0.75


def test_history_counts_footprints(small_grid):
    h = empty_history(small_grid)
    m = np.zeros(small_grid.shape, dtype=np.float32)
    m[2, 3, 0] = m[2, 3, 4] = 1.0  # same column twice counts once
    m[5, 5, 1] = 0.5  # not above threshold
    g = Subgoal(SubgoalType.OPEN, 9, m)
    h = update_history_tensor(update_history_tensor(h, g), g)
    assert h[SubgoalType.OPEN, 2, 3] == 2
    assert h.sum() == 2
    with pytest.raises(ValueError):
        update_history_tensor(h, Subgoal.stop(small_grid))


def test_ego_transform_fixed_example():
    m = np.zeros((1, 5, 5))
    m[0, 3, 2] = 1.0  # one cell east of the agent
    ego = ego_transform(m, Pose(2, 2, Yaw.EAST))
    # facing east, that cell is straight ahead: egocentric north of centre
    assert np.argwhere(ego[0]).tolist() == [[2, 3]]


@settings(max_examples=60, deadline=None)
@given(
    st.integers(3, 9).map(lambda n: n | 1),
    st.integers(0, 3),
    st.integers(0, 2**31 - 1),
)
def test_ego_allo_inverse_on_centered_agent(n, yaw, seed):
    rng = np.random.default_rng(seed)
    m = rng.random((2, n, n))
    pose = Pose(n // 2, n // 2, Yaw(yaw))
    assert np.array_equal(allo_transform(ego_transform(m, pose), pose), m)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10), st.integers(0, 10), st.integers(0, 3), st.integers(0, 2**31 - 1))
def test_allo_of_ego_keeps_visible_cells(x, y, yaw, seed):
    rng = np.random.default_rng(seed)
    m = rng.random((1, 11, 11)) + 0.1
    pose = Pose(x, y, Yaw(yaw))
    back = allo_transform(ego_transform(m, pose), pose)
    kept = back != 0
    assert np.array_equal(back[kept], m[kept])
    assert kept[0, x, y]
