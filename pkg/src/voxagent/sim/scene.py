"""Line-based scene files.

    # comment
    grid X Y Z voxel_size                 (first directive)
    floor x0 y0 z0 x1 y1 z1               (inclusive boxes; also rug, wall)
    object ID Class x0 y0 z0 [x1 y1 z1] [in=ID] [open] [on] [clean] [hot] [cold] [sliced]
    link FAUCET_ID SINK_ID
    agent x y N|E|S|W pitch
    camera width height hfov camera_height
    task Type object=Class [receptacle=Class] [intermediate=Class] [sliced]
    instruction "free text"

Later static boxes overwrite earlier ones. Object voxels may not overlap each
other or static voxels. Pickable objects occupy exactly one voxel.
"""

from __future__ import annotations

import shlex
from dataclasses import replace
from importlib import resources
from pathlib import Path

import numpy as np

from ..camera import CameraIntrinsics
from ..core import GridConfig, Pose, Yaw
from ..hlc import TaskSpec, TaskType, Vocabulary, parse_instruction, render_instruction
from .world import WorldState, _blocked

_STATIC = {"floor": "Floor", "rug": "Rug", "wall": "Wall"}
_FLAG_FIELDS = {"open": "open", "on": "toggled", "clean": "clean", "hot": "hot", "cold": "cold", "sliced": "sliced"}


class SceneError(ValueError):
    def __init__(self, line: int | None, msg: str):
        self.line = line
        super().__init__(f"line {line}: {msg}" if line else msg)


def _ints(tok, line, what):
    try:
        return [int(t) for t in tok]
    except ValueError:
        raise SceneError(line, f"{what}: expected integers, got {' '.join(tok)!r}") from None


def _box(tok, line, what):
    if len(tok) not in (3, 6):
        raise SceneError(line, f"{what}: expected 3 or 6 coordinates")
    v = _ints(tok, line, what)
    lo, hi = v[:3], (v[3:] if len(v) == 6 else v[:3])
    if any(a > b for a, b in zip(lo, hi)):
        raise SceneError(line, f"{what}: box corners out of order")
    return lo, hi


def load_scene(text: str, grid: GridConfig | None = None, vocab: Vocabulary | None = None, name: str = "") -> WorldState:
    from .world import ObjectInstance

    base = GridConfig.from_table() if grid is None else grid
    g = None
    static = None
    objects: dict = {}
    where: dict = {}
    parents: dict = {}
    links: dict = {}
    agent = None
    intr = CameraIntrinsics()
    task = None
    instruction = ""

    for ln, raw in enumerate(text.splitlines(), start=1):
        try:
            tok = shlex.split(raw, comments=True)
        except ValueError as e:
            raise SceneError(ln, str(e)) from None
        if not tok:
            continue
        key, args = tok[0], tok[1:]
        if key != "grid" and g is None:
            raise SceneError(ln, "the first directive must be 'grid'")
        if key == "grid":
            if g is not None:
                raise SceneError(ln, "duplicate grid directive")
            if len(args) != 4:
                raise SceneError(ln, "grid: expected X Y Z voxel_size")
            x, y, z = _ints(args[:3], ln, "grid")
            try:
                s = float(args[3])
                g = base.with_dims(x, y, z, s)
            except ValueError as e:
                raise SceneError(ln, f"grid: {e}") from None
            static = np.zeros(g.shape, dtype=np.int16)
        elif key in _STATIC:
            lo, hi = _box(args, ln, key)
            if any(a < 0 for a in lo) or any(b >= n for b, n in zip(hi, g.shape)):
                raise SceneError(ln, f"{key}: box outside the grid")
            static[lo[0] : hi[0] + 1, lo[1] : hi[1] + 1, lo[2] : hi[2] + 1] = g.class_index(_STATIC[key])
        elif key == "object":
            if len(args) < 5:
                raise SceneError(ln, "object: expected ID Class and a voxel box")
            oid, cls = args[0], args[1]
            if oid in objects:
                raise SceneError(ln, f"duplicate object id {oid!r}")
            if cls not in g.class_names:
                raise SceneError(ln, f"object {oid}: unknown class {cls!r}")
            coords = [a for a in args[2:] if "=" not in a and a not in _FLAG_FIELDS]
            opts = [a for a in args[2:] if a not in coords]
            lo, hi = _box(coords, ln, f"object {oid}")
            if any(a < 0 for a in lo) or any(b >= n for b, n in zip(hi, g.shape)):
                raise SceneError(ln, f"object {oid}: voxels out of bounds")
            vox = frozenset(
                (x, y, z)
                for x in range(lo[0], hi[0] + 1)
                for y in range(lo[1], hi[1] + 1)
                for z in range(lo[2], hi[2] + 1)
            )
            if g.has_affordance(cls, "pickable") and len(vox) != 1:
                raise SceneError(ln, f"object {oid}: pickable objects occupy a single voxel")
            flags = {}
            for o in opts:
                if o in _FLAG_FIELDS:
                    flags[_FLAG_FIELDS[o]] = True
                elif o.startswith("in="):
                    parents[oid] = (o[3:], ln)
                else:
                    raise SceneError(ln, f"object {oid}: unknown option {o!r}")
            if flags.get("open") and not g.has_affordance(cls, "openable"):
                raise SceneError(ln, f"object {oid}: {cls} is not openable")
            if flags.get("toggled") and not g.has_affordance(cls, "togglable"):
                raise SceneError(ln, f"object {oid}: {cls} is not togglable")
            objects[oid] = ObjectInstance(oid, cls, vox, **flags)
            where[oid] = ln
        elif key == "link":
            if len(args) != 2:
                raise SceneError(ln, "link: expected FAUCET_ID SINK_ID")
            links[args[0]] = (args[1], ln)
        elif key == "agent":
            if len(args) != 4:
                raise SceneError(ln, "agent: expected x y yaw pitch")
            x, y = _ints(args[:2], ln, "agent")
            try:
                yaw = Yaw[{"N": "NORTH", "E": "EAST", "S": "SOUTH", "W": "WEST"}.get(args[2].upper(), args[2].upper())]
                agent = Pose(x, y, yaw, int(args[3]))
                agent.validate(g)
            except (KeyError, ValueError) as e:
                raise SceneError(ln, f"agent: {e}") from None
        elif key == "camera":
            if len(args) != 4:
                raise SceneError(ln, "camera: expected width height hfov camera_height")
            try:
                intr = CameraIntrinsics(int(args[0]), int(args[1]), float(args[2]), float(args[3]))
            except ValueError as e:
                raise SceneError(ln, f"camera: {e}") from None
        elif key == "task":
            if not args:
                raise SceneError(ln, "task: missing task type")
            kw = {}
            sliced = False
            for a in args[1:]:
                if a == "sliced":
                    sliced = True
                elif "=" in a:
                    k, v = a.split("=", 1)
                    kw[{"object": "object_class", "receptacle": "receptacle_class", "intermediate": "intermediate_class"}.get(k, k)] = v
                else:
                    raise SceneError(ln, f"task: unexpected token {a!r}")
            try:
                task = TaskSpec(TaskType(args[0]), sliced=sliced, **kw).validate(g)
            except (TypeError, ValueError, KeyError) as e:
                raise SceneError(ln, f"task: {e}") from None
        elif key == "instruction":
            if len(args) != 1:
                raise SceneError(ln, "instruction: quote the text")
            instruction = args[0]
        else:
            raise SceneError(ln, f"unknown directive {key!r}")

    if g is None:
        raise SceneError(None, "empty scene: no grid directive")
    if agent is None:
        raise SceneError(None, "no agent directive")

    seen: dict = {}
    for oid in sorted(objects):
        for v in objects[oid].voxels:
            if static[v]:
                raise SceneError(where[oid], f"object {oid} overlaps a static voxel at {v}")
            if v in seen:
                raise SceneError(where[oid], f"object {oid} overlaps object {seen[v]} at {v}")
            seen[v] = oid

    for oid, (pid, ln) in sorted(parents.items()):
        if pid not in objects:
            raise SceneError(ln, f"object {oid}: container {pid!r} does not exist")
        if not g.has_affordance(objects[pid].cls, "receptacle"):
            raise SceneError(ln, f"object {oid}: {objects[pid].cls} is not a receptacle")
        objects[oid] = replace(objects[oid], contained_in=pid)
        objects[pid] = replace(objects[pid], contents=objects[pid].contents | {oid})
    for oid in objects:
        chain, cur = {oid}, objects[oid].contained_in
        while cur is not None:
            if cur in chain:
                raise SceneError(where[oid], f"object {oid}: containment cycle")
            chain.add(cur)
            cur = objects[cur].contained_in

    faucets = {}
    for fid, (sid, ln) in links.items():
        if fid not in objects or not g.has_affordance(objects[fid].cls, "togglable"):
            raise SceneError(ln, f"link: {fid!r} is not a togglable object")
        if sid not in objects or not g.has_affordance(objects[sid].cls, "receptacle"):
            raise SceneError(ln, f"link: {sid!r} is not a receptacle")
        faucets[fid] = sid

    if task is None and instruction:
        vocab = Vocabulary.load(g.class_names) if vocab is None else vocab
        try:
            task = parse_instruction(instruction, vocab).validate(g)
        except ValueError as e:
            raise SceneError(None, f"instruction: {e}") from None
    if task is not None and not instruction:
        vocab = Vocabulary.load(g.class_names) if vocab is None else vocab
        instruction = render_instruction(task, vocab)

    world = WorldState(g, static, objects, agent, None, task, instruction, intr, faucets, name)
    if _blocked(world, agent.x, agent.y):
        raise SceneError(None, f"agent cell ({agent.x}, {agent.y}) is occupied")
    return world


def load_scene_file(path: str | Path, **kw) -> WorldState:
    path = Path(path)
    return load_scene(path.read_text(), name=kw.pop("name", path.stem), **kw)


def reference_scenes() -> list[Path]:
    root = resources.files("voxagent.data").joinpath("scenes")
    return sorted(Path(str(p)) for p in root.iterdir() if p.name.endswith(".scene"))
