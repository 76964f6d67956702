"""Ground-truth world state and action dynamics."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..actions import EnvAction, Interaction, NavAction
from ..camera import CameraIntrinsics
from ..core import PITCHES, GridConfig, Pose, SubgoalType

STATE_FLAGS = ("open", "toggled", "clean", "hot", "cold", "sliced")


@dataclass(frozen=True)
class ObjectInstance:
    id: str
    cls: str
    voxels: frozenset  # of (x, y, z); empty while held
    open: bool = False
    toggled: bool = False
    clean: bool = False
    hot: bool = False
    cold: bool = False
    sliced: bool = False
    contained_in: str | None = None
    contents: frozenset = frozenset()

    def states(self) -> dict:
        return {k: getattr(self, k) for k in STATE_FLAGS}

    def columns(self) -> set:
        return {(x, y) for x, y, _ in self.voxels}


@dataclass(frozen=True)
class SimConfig:
    reach_cells: int = 6  # Chebyshev, 1.5 m at 0.25 m voxels
    capacity: int = 3
    overlap_fraction: float = 0.5
    move_height_range: tuple[float, float] = (0.0, 1.75)


@dataclass(frozen=True, eq=False)
class WorldState:
    grid: GridConfig
    static: np.ndarray  # [X, Y, Z] class index, 0 = empty
    objects: dict  # id -> ObjectInstance
    agent: Pose
    held: str | None = None
    task: object = None  # hlc.TaskSpec
    instruction: str = ""
    intrinsics: CameraIntrinsics = field(default_factory=CameraIntrinsics)
    links: dict = field(default_factory=dict)  # faucet id -> sink id
    name: str = ""
    config: SimConfig = field(default_factory=SimConfig)

    def with_objects(self, changed: dict, **kw) -> "WorldState":
        objs = dict(self.objects)
        objs.update(changed)
        return replace(self, objects=objs, **kw)

    def inventory(self) -> np.ndarray:
        inv = np.zeros(self.grid.num_classes, dtype=np.uint8)
        if self.held is not None:
            inv[self.grid.class_index(self.objects[self.held].cls)] = 1
        return inv

    def hidden(self, oid: str) -> bool:
        """True if the object sits (transitively) inside a closed openable receptacle."""
        parent = self.objects[oid].contained_in
        while parent is not None:
            p = self.objects[parent]
            if self.grid.has_affordance(p.cls, "openable") and not p.open:
                return True
            parent = p.contained_in
        return False

    def visible_ids(self) -> list[str]:
        return [oid for oid in sorted(self.objects) if self.objects[oid].voxels and not self.hidden(oid)]

    def label_grids(self) -> tuple[np.ndarray, np.ndarray]:
        """Visible class grid and instance grid (-1 for non-object voxels), with the id list."""
        cls = self.static.astype(np.int16).copy()
        inst = np.full(self.grid.shape, -1, dtype=np.int32)
        ids = self.visible_ids()
        for k, oid in enumerate(ids):
            o = self.objects[oid]
            c = self.grid.class_index(o.cls)
            for v in o.voxels:
                cls[v] = c
                inst[v] = k
        return cls, inst, ids

    def solid(self) -> np.ndarray:
        """Every physically present voxel, hidden or not (for placement and movement)."""
        occ = self.static > 0
        for o in self.objects.values():
            for v in o.voxels:
                occ[v] = True
        return occ

    def ground_truth_classes(self) -> np.ndarray:
        return self.label_grids()[0]


def _blocked(world: WorldState, x: int, y: int) -> bool:
    g = world.grid
    if not (0 <= x < g.dims_x and 0 <= y < g.dims_y):
        return True
    zs = g.height_slice(*world.config.move_height_range)
    obst = g.class_mask("obstacle")
    if obst[world.static[x, y, zs]].any():
        return True
    for o in world.objects.values():
        if obst[g.class_index(o.cls)] and any(vx == x and vy == y and zs.start <= vz < zs.stop for vx, vy, vz in o.voxels):
            return True
    return False


def _navigate(world: WorldState, a: NavAction) -> tuple[WorldState, bool]:
    p = world.agent
    if a is NavAction.MOVE_AHEAD:
        dx, dy = p.yaw.offset
        nx, ny = p.x + dx, p.y + dy
        if _blocked(world, nx, ny):
            return world, False
        return replace(world, agent=replace(p, x=nx, y=ny)), True
    if a is NavAction.ROTATE_LEFT:
        return replace(world, agent=replace(p, yaw=p.yaw.left())), True
    if a is NavAction.ROTATE_RIGHT:
        return replace(world, agent=replace(p, yaw=p.yaw.right())), True
    step = -30 if a is NavAction.LOOK_UP else 30
    if p.pitch + step not in PITCHES:
        return world, False
    return replace(world, agent=replace(p, pitch=p.pitch + step)), True


def resolve_target(world: WorldState, mask: np.ndarray) -> str | None:
    """Instance with the largest pixel overlap, if it covers more than the configured fraction of the mask."""
    from .render import instance_image

    mask = np.asarray(mask, dtype=bool)
    n = int(mask.sum())
    if n == 0:
        return None
    inst, ids = instance_image(world)
    hits = inst[mask]
    hits = hits[hits >= 0]
    if hits.size == 0:
        return None
    counts = np.bincount(hits, minlength=len(ids))
    k = int(counts.argmax())
    if counts[k] <= world.config.overlap_fraction * n:
        return None
    return ids[k]


def in_reach(world: WorldState, oid: str) -> bool:
    ax, ay = world.agent.cell
    cols = world.objects[oid].columns()
    return bool(cols) and min(max(abs(x - ax), abs(y - ay)) for x, y in cols) <= world.config.reach_cells


def _detach(world: WorldState, oid: str) -> dict:
    """Remove oid and everything it carries from the scene geometry."""
    changed = {}
    stack = [oid]
    while stack:
        cur = stack.pop()
        o = changed.get(cur, world.objects[cur])
        changed[cur] = replace(o, voxels=frozenset())
        stack.extend(sorted(o.contents))
    o = changed[oid]
    if o.contained_in is not None:
        parent = world.objects[o.contained_in]
        changed[parent.id] = replace(parent, contents=parent.contents - {oid})
        changed[oid] = replace(o, contained_in=None)
    return changed


def _slot_above(occ: np.ndarray, x: int, y: int, z0: int) -> int | None:
    for z in range(z0, occ.shape[2]):
        if not occ[x, y, z]:
            return z
    return None


def _place(world: WorldState, oid: str, recep: ObjectInstance) -> dict | None:
    occ = world.solid()
    ax, ay = world.agent.cell
    tops = {}
    for x, y, z in recep.voxels:
        tops[(x, y)] = max(tops.get((x, y), -1), z)
    options = []
    for (x, y), top in tops.items():
        z = _slot_above(occ, x, y, top + 1)
        if z is None:
            continue
        stacked = z != top + 1
        options.append((stacked, (x - ax) ** 2 + (y - ay) ** 2, x, y, z))
    if not options:
        return None
    _, _, x, y, z = min(options)
    changed = {}
    obj = world.objects[oid]
    changed[oid] = replace(obj, voxels=frozenset({(x, y, z)}), contained_in=recep.id)
    changed[recep.id] = replace(recep, contents=recep.contents | {oid})
    occ[x, y, z] = True
    # carried contents go back on top of their container, in the same column
    stack = [(c, x, y, z + 1) for c in sorted(obj.contents)]
    while stack:
        cid, cx, cy, cz = stack.pop(0)
        slot = _slot_above(occ, cx, cy, cz)
        if slot is None:
            return None
        occ[cx, cy, slot] = True
        c = world.objects[cid]
        changed[cid] = replace(c, voxels=frozenset({(cx, cy, slot)}))
        stack.extend((g, cx, cy, slot + 1) for g in sorted(c.contents))
    return changed


def _set_contents(world: WorldState, recep: ObjectInstance, **flags) -> dict:
    return {cid: replace(world.objects[cid], **flags) for cid in sorted(recep.contents)}


def _interact(world: WorldState, act: Interaction) -> tuple[WorldState, bool]:
    g = world.grid
    st = act.stype
    if st is SubgoalType.PUT and world.held is None:
        return world, False
    if st is SubgoalType.PICKUP and world.held is not None:
        return world, False
    oid = resolve_target(world, act.mask)
    if oid is None or not in_reach(world, oid):
        return world, False
    obj = world.objects[oid]
    aff = g.class_affordances[obj.cls]

    if st is SubgoalType.PICKUP:
        if "pickable" not in aff:
            return world, False
        return world.with_objects(_detach(world, oid), held=oid), True

    if st is SubgoalType.PUT:
        if "receptacle" not in aff or oid == world.held:
            return world, False
        if "openable" in aff and not obj.open:
            return world, False
        if len(obj.contents) >= world.config.capacity:
            return world, False
        changed = _place(world, world.held, obj)
        if changed is None:
            return world, False
        return world.with_objects(changed, held=None), True

    if st in (SubgoalType.OPEN, SubgoalType.CLOSE):
        want = st is SubgoalType.OPEN
        if "openable" not in aff or obj.open == want:
            return world, False
        changed = {oid: replace(obj, open=want)}
        if not want and obj.cls == "Fridge":
            changed.update(_set_contents(world, obj, cold=True, hot=False))
        return world.with_objects(changed), True

    if st in (SubgoalType.TOGGLE_ON, SubgoalType.TOGGLE_OFF):
        want = st is SubgoalType.TOGGLE_ON
        if "togglable" not in aff or obj.toggled == want:
            return world, False
        changed = {oid: replace(obj, toggled=want)}
        if not want and obj.cls == "Microwave":
            changed.update(_set_contents(world, obj, hot=True, cold=False))
        if want and oid in world.links:
            changed.update(_set_contents(world, world.objects[world.links[oid]], clean=True))
        return world.with_objects(changed), True

    if st is SubgoalType.SLICE:
        if world.held is None or world.objects[world.held].cls != "Knife":
            return world, False
        if obj.cls not in g.sliceable or obj.sliced:
            return world, False
        changed = {}
        parts = set()
        for k, v in enumerate(sorted(obj.voxels)):
            pid = f"{oid}.slice{k}"
            changed[pid] = replace(obj, id=pid, voxels=frozenset({v}), sliced=True, contents=frozenset())
            parts.add(pid)
        objs = {k: v for k, v in world.objects.items() if k != oid}
        if obj.contained_in is not None:
            parent = objs[obj.contained_in]
            objs[parent.id] = replace(parent, contents=(parent.contents - {oid}) | parts)
        objs.update(changed)
        return replace(world, objects=objs), True

    return world, False


def transition(world: WorldState, action: EnvAction) -> tuple[WorldState, bool]:
    """Apply one action. Never raises on a failed action; it reports success=False instead."""
    if isinstance(action, NavAction):
        return _navigate(world, action)
    if isinstance(action, Interaction):
        return _interact(world, action)
    raise TypeError(f"not an environment action: {action!r}")
