from dataclasses import replace

import numpy as np
import pytest

from voxagent.actions import Interaction, NavAction
from voxagent.core import Pose, SubgoalType, Yaw
from voxagent.hlc import TaskSpec, TaskType
from voxagent.observation import ObsConfig
from voxagent.sim import NoiseConfig, SceneError, SimConfig, goal_conditions, load_scene, render, transition
from voxagent.sim.render import cast, depth_distribution, instance_image

KITCHEN = """
grid 10 10 8 0.25
floor 0 0 0 9 9 0
object counter CounterTop 1 6 1 8 6 3
object apple Apple 2 6 4 in=counter
object knife Knife 3 6 4 in=counter
object mw Microwave 5 6 4 6 6 5 in=counter
object lamp FloorLamp 8 8 1 8 8 6
agent 4 3 N 30
task HeatAndPlace object=Apple receptacle=CounterTop
"""

SINK = """
grid 8 8 8 0.25
floor 0 0 0 7 7 0
object sink Sink 2 5 1 5 5 3
object faucet Faucet 3 6 4
object counter CounterTop 2 6 1 5 6 3
object mug Mug 3 5 4 in=sink
link faucet sink
agent 3 2 N 30
task CleanAndPlace object=Mug receptacle=CounterTop
"""

FRIDGE = """
grid 8 8 8 0.25
floor 0 0 0 7 7 0
object fridge Fridge 2 5 1 4 6 3 open
object egg Egg 3 5 4 in=fridge
agent 3 2 N 30
task CoolAndPlace object=Egg receptacle=CounterTop
object counter CounterTop 6 5 1 6 6 3
"""


def mask_of(world, oid):
    inst, ids = instance_image(world)
    return inst == ids.index(oid) if oid in ids else np.zeros_like(inst, bool)


def act(world, stype, oid):
    return transition(world, Interaction(stype, mask_of(world, oid)))


@pytest.fixture
def kitchen(grid):
    return load_scene(KITCHEN, grid=grid, name="kitchen")


# -- scene loading ------------------------------------------------------------


def test_minimal_scene_loads(grid):
    w = load_scene(
        "grid 10 10 6 0.25\nfloor 0 0 0 9 9 0\nobject t DiningTable 5 5 1 6 6 3\n"
        "object m Mug 5 5 4 in=t\nagent 2 2 N 0\n",
        grid=grid,
    )
    assert w.agent == Pose(2, 2, Yaw.NORTH, 0)
    assert w.objects["m"].contained_in == "t" and w.objects["t"].contents == {"m"}
    assert w.task is None and w.held is None


@pytest.mark.parametrize(
    "text, needle, line",
    [
        ("grid 4 4 4 0.25\nobject m Mug 9 0 0\nagent 0 0 N 0\n", "object m", 2),
        ("grid 4 4 4 0.25\nobject m Mug 1 1 1\nobject m Mug 2 2 1\nagent 0 0 N 0\n", "duplicate object id", 3),
        ("floor 0 0 0 1 1 0\n", "first directive", 1),
        ("grid 4 4 4 0.25\nobject x Dragon 1 1 1\nagent 0 0 N 0\n", "unknown class", 2),
        ("grid 4 4 4 0.25\nobject m Mug 1 1 1 2 1 1\nagent 0 0 N 0\n", "single voxel", 2),
        ("grid 4 4 4 0.25\nagent 0 0 N 45\n", "agent", 2),
        ("grid 4 4 4 0.25\nwall 1 1 0 1 1 3\nobject m Mug 1 1 1\nagent 0 0 N 0\n", "overlaps a static", 3),
        ("grid 4 4 4 0.25\nobject m Mug 1 1 1 in=nowhere\nagent 0 0 N 0\n", "does not exist", 2),
        ("grid 4 4 4 0.25\nagent 0 0 N 0\ntask PickAndPlace object=Mug\n", "task", 3),
        ("grid 4 4 4 0.25\nbogus 1\n", "unknown directive", 2),
    ],
)
def test_scene_errors_name_the_line(grid, text, needle, line):
    with pytest.raises(SceneError) as e:
        load_scene(text, grid=grid)
    assert needle in str(e.value) and e.value.line == line


def test_agent_cannot_start_inside_furniture(grid):
    with pytest.raises(SceneError, match="occupied"):
        load_scene("grid 4 4 4 0.25\nobject t DiningTable 1 1 1 2 2 2\nagent 1 1 N 0\n", grid=grid)


def test_instruction_becomes_task(grid):
    w = load_scene('grid 4 4 4 0.25\nagent 0 0 N 0\ninstruction "put two discs in the safe"\n', grid=grid)
    assert w.task == TaskSpec(TaskType.PICK_TWO_AND_PLACE, "CD", "Safe")


def test_reference_scenes_cover_every_task_type(grid, scenes):
    from voxagent.sim import load_scene_file

    types = {load_scene_file(p, grid=grid).task.task_type for p in scenes.values()}
    assert types == set(TaskType)


# -- navigation ---------------------------------------------------------------


def test_move_into_furniture_fails(kitchen):
    w = replace(kitchen, agent=Pose(4, 5, Yaw.NORTH, 30))
    w2, ok = transition(w, NavAction.MOVE_AHEAD)
    assert not ok and w2.agent == w.agent


def test_move_off_grid_fails(kitchen):
    w = replace(kitchen, agent=Pose(0, 0, Yaw.SOUTH, 30))
    assert transition(w, NavAction.MOVE_AHEAD)[1] is False


def test_moves_and_turns(kitchen):
    w, ok = transition(kitchen, NavAction.MOVE_AHEAD)
    assert ok and w.agent == Pose(4, 4, Yaw.NORTH, 30)
    w, _ = transition(w, NavAction.ROTATE_RIGHT)
    assert w.agent.yaw is Yaw.EAST
    w, _ = transition(w, NavAction.LOOK_DOWN)
    assert w.agent.pitch == 60
    w2, ok = transition(w, NavAction.LOOK_DOWN)
    assert not ok and w2.agent.pitch == 60
    w = replace(w, agent=replace(w.agent, pitch=-30))
    assert transition(w, NavAction.LOOK_UP)[1] is False


# -- interactions -------------------------------------------------------------


def test_pickup_sets_inventory(kitchen):
    w, ok = act(kitchen, SubgoalType.PICKUP, "apple")
    assert ok and w.held == "apple"
    inv = w.inventory()
    assert inv.sum() == 1 and inv[w.grid.class_index("Apple")] == 1
    assert not w.objects["apple"].voxels and "apple" not in w.objects["counter"].contents
    # hand is full now
    assert act(w, SubgoalType.PICKUP, "knife")[1] is False


def test_preconditions(kitchen):
    assert act(kitchen, SubgoalType.TOGGLE_ON, "counter")[1] is False
    assert act(kitchen, SubgoalType.PICKUP, "counter")[1] is False
    assert act(kitchen, SubgoalType.PUT, "counter")[1] is False  # nothing held
    assert act(kitchen, SubgoalType.CLOSE, "mw")[1] is False  # already closed
    assert act(kitchen, SubgoalType.SLICE, "apple")[1] is False  # no knife
    assert transition(kitchen, Interaction(SubgoalType.PICKUP, np.zeros((64, 64), bool)))[1] is False


def test_reach_limit(kitchen):
    far = replace(kitchen, config=SimConfig(reach_cells=2))
    assert act(far, SubgoalType.PICKUP, "apple")[1] is False
    assert act(replace(kitchen, config=SimConfig(reach_cells=3)), SubgoalType.PICKUP, "apple")[1]


def test_mask_overlap_must_exceed_half(kitchen):
    m = mask_of(kitchen, "apple")
    n = int(m.sum())
    other = np.argwhere(~m & (instance_image(kitchen)[0] == -1))
    half = m.copy()
    half[tuple(other[:n].T)] = True  # apple is exactly 50% of the mask
    assert transition(kitchen, Interaction(SubgoalType.PICKUP, half))[1] is False
    most = m.copy()
    most[tuple(other[: n - 1].T)] = True
    assert transition(kitchen, Interaction(SubgoalType.PICKUP, most))[1] is True


def test_heating_in_the_microwave(kitchen):
    w, _ = act(kitchen, SubgoalType.PICKUP, "apple")
    assert act(w, SubgoalType.PUT, "mw")[1] is False  # closed
    w, ok = act(w, SubgoalType.OPEN, "mw")
    assert ok
    w, ok = act(w, SubgoalType.PUT, "mw")
    assert ok and w.objects["apple"].contained_in == "mw" and w.held is None
    w, _ = act(w, SubgoalType.CLOSE, "mw")
    assert "apple" not in w.visible_ids()
    assert not (cast(w).cls == w.grid.class_index("Apple")).any()
    w, _ = act(w, SubgoalType.TOGGLE_ON, "mw")
    assert not w.objects["apple"].hot
    w, _ = act(w, SubgoalType.TOGGLE_OFF, "mw")
    assert w.objects["apple"].hot


def test_faucet_cleans_sink_contents(grid):
    w = load_scene(SINK, grid=grid)
    assert not w.objects["mug"].clean
    w, ok = act(w, SubgoalType.TOGGLE_ON, "faucet")
    assert ok and w.objects["mug"].clean


def test_fridge_close_chills(grid):
    w = load_scene(FRIDGE, grid=grid)
    w, ok = act(w, SubgoalType.CLOSE, "fridge")
    assert ok and w.objects["egg"].cold
    assert "egg" in w.objects["fridge"].contents and "egg" not in w.visible_ids()


def test_slicing_replaces_the_instance(kitchen):
    w, _ = act(kitchen, SubgoalType.PICKUP, "knife")
    w, ok = act(w, SubgoalType.SLICE, "apple")
    assert ok
    assert "apple" not in w.objects
    parts = [o for o in w.objects.values() if o.cls == "Apple"]
    assert [p.id for p in parts] == ["apple.slice0"] and parts[0].sliced
    assert w.objects["counter"].contents == {"apple.slice0", "mw"}
    assert act(w, SubgoalType.SLICE, "apple.slice0")[1] is False


def test_capacity_limit(grid):
    text = KITCHEN.replace(
        "object lamp FloorLamp 8 8 1 8 8 6",
        "object lamp FloorLamp 8 8 1 8 8 6\nobject egg Egg 7 6 4 in=counter",
    )
    w = load_scene(text, grid=grid)
    assert len(w.objects["counter"].contents) == 4
    w, _ = act(w, SubgoalType.PICKUP, "apple")
    assert len(w.objects["counter"].contents) == 3
    assert act(replace(w, config=SimConfig(capacity=3)), SubgoalType.PUT, "counter")[1] is False
    w, ok = act(replace(w, config=SimConfig(capacity=4)), SubgoalType.PUT, "counter")
    assert ok and len(w.objects["counter"].contents) == 4


def test_transition_is_deterministic_and_conserves_objects(kitchen):
    seq = [NavAction.MOVE_AHEAD, ("pick", "apple"), NavAction.ROTATE_LEFT, NavAction.ROTATE_RIGHT, ("put", "counter")]
    runs = []
    for _ in range(2):
        w, log = kitchen, []
        for a in seq:
            if isinstance(a, tuple):
                w, ok = act(w, SubgoalType.PICKUP if a[0] == "pick" else SubgoalType.PUT, a[1])
            else:
                w, ok = transition(w, a)
            log.append(ok)
            assert set(w.objects) == set(kitchen.objects)
        runs.append((log, w.agent, {k: (o.voxels, o.contained_in) for k, o in w.objects.items()}))
    assert runs[0] == runs[1] and all(runs[0][0])


# -- rendering ----------------------------------------------------------------

WALL = """
grid 5 8 8 0.25
floor 0 0 0 4 7 0
wall 0 5 0 4 5 7
agent 2 0 N 0
"""


def test_wall_ahead_depth_and_class(grid):
    w = load_scene(WALL, grid=grid)
    obs = render(w)
    # the face is 1.125 m ahead; 1.2 m is the first bin whose point lies in the wall voxel
    centre = obs.depth[31:33, 31:33]
    assert (centre.argmax(axis=-1) == 12).all() and (centre.max(axis=-1) == 1.0).all()
    assert (obs.seg[31:33, 31:33].argmax(axis=-1) == w.grid.class_index("Wall")).all()


def test_sky_is_background_and_no_return(grid):
    w = load_scene(WALL.replace("agent 2 0 N 0", "agent 2 0 S -30"), grid=grid)
    obs = render(w)
    assert obs.seg[0, 32].argmax() == 0 and obs.depth[0, 32].argmax() == 49


def test_depth_noise_spreads_mass(grid):
    w = load_scene(WALL, grid=grid)
    cfg = ObsConfig()
    d = render(w, NoiseConfig(depth_sigma=0.1), np.random.default_rng(0)).depth
    c = d[32, 32]
    assert c.sum() == pytest.approx(1.0) and 0 < c[12] < 1 and c[11] > 0 and c[13] > 0
    assert np.allclose(d.sum(axis=-1), 1.0)
    flat = depth_distribution(np.array([-1]), cfg)
    assert np.allclose(flat, 1 / 50)


def test_seg_flips_stay_one_hot(kitchen):
    clean = render(kitchen).seg.argmax(axis=-1)
    noisy = render(kitchen, NoiseConfig(seg_flip=1.0), np.random.default_rng(0)).seg
    assert np.array_equal(noisy.sum(axis=-1), np.ones((64, 64)))
    assert (noisy.argmax(axis=-1) != clean).all()
    with pytest.raises(ValueError):
        render(kitchen, NoiseConfig(seg_flip=0.1))


def test_first_hit_hides_what_is_behind(grid, kitchen):
    behind = load_scene(KITCHEN.replace("agent", "object egg Egg 5 7 4\nagent"), grid=grid)
    before, after = cast(kitchen), cast(behind)
    mw = before.cls == grid.class_index("Microwave")
    assert mw.any()
    # the egg behind the microwave changes no pixel the microwave already covered
    assert np.array_equal(after.cls[mw], before.cls[mw]) and np.array_equal(after.bin[mw], before.bin[mw])


def test_rgb_is_palette_based(kitchen):
    obs = render(kitchen, with_rgb=True)
    assert obs.rgb.shape == (3, 64, 64) and obs.rgb.min() >= 0 and obs.rgb.max() <= 1
    labels = obs.seg.argmax(axis=-1)
    a = labels == kitchen.grid.class_index("Apple")
    assert a.any() and np.unique(obs.rgb[:, a], axis=1).shape[1] == 1


# -- goal conditions ----------------------------------------------------------


def test_initial_scene_satisfies_nothing(grid, scenes):
    from voxagent.sim import load_scene_file

    for p in scenes.values():
        w = load_scene_file(p, grid=grid)
        sat, total = goal_conditions(w.task, w)
        assert sat == 0 and total >= 1, p.stem


def test_heat_task_with_a_cold_object_placed(kitchen):
    w = kitchen.with_objects({"apple": replace(kitchen.objects["apple"], cold=True)})
    assert goal_conditions(w.task, w) == (1, 2)
    w = w.with_objects({"apple": replace(w.objects["apple"], hot=True)})
    assert goal_conditions(w.task, w) == (2, 2)


def test_pick_and_place_done(room):
    w, _ = act(replace(room, agent=Pose(4, 5, Yaw.EAST, 30)), SubgoalType.PICKUP, "apple1")
    assert goal_conditions(room.task, w) == (0, 1)
    w = replace(w, agent=Pose(3, 6, Yaw.WEST, 30))
    w, ok = act(w, SubgoalType.PUT, "counter1")
    assert ok and goal_conditions(room.task, w) == (1, 1)


def test_pick_two_counts_distinct_instances(grid):
    text = """
grid 8 8 8 0.25
floor 0 0 0 7 7 0
object box Safe 2 5 1 3 6 2 open
object cd1 CD 2 5 3 in=box
object cd2 CD 5 5 1
agent 3 2 N 30
task PickTwoAndPlace object=CD receptacle=Safe
"""
    w = load_scene(text, grid=grid)
    assert goal_conditions(w.task, w) == (1, 2)
    w = w.with_objects({"cd2": replace(w.objects["cd2"], contained_in="box")})
    assert goal_conditions(w.task, w) == (2, 2)


def test_examine_needs_object_held_and_lamp_on(kitchen):
    task = TaskSpec(TaskType.EXAMINE, "Apple")
    assert goal_conditions(task, kitchen) == (0, 2)
    w, _ = act(kitchen, SubgoalType.PICKUP, "apple")
    assert goal_conditions(task, w) == (1, 2)
    w = w.with_objects({"lamp": replace(w.objects["lamp"], toggled=True)})
    assert goal_conditions(task, w) == (2, 2)


def test_sliced_adds_a_condition(kitchen):
    task = TaskSpec(TaskType.PICK_AND_PLACE, "Apple", "CounterTop", sliced=True)
    assert goal_conditions(task, kitchen) == (1, 2)
