"""Shared spatial/semantic data model and pure map algebra."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

AFFORDANCES = ("pickable", "receptacle", "togglable", "openable", "ground", "obstacle")
FEATURE_CHANNELS = AFFORDANCES + ("observed",)
PRESENCE_THRESHOLD = 0.5
PITCHES = (-30, 0, 30, 60)


class Yaw(enum.IntEnum):
    """Compass heading. Values increase clockwise; North is +y, East is +x."""

    NORTH = 0
    EAST = 1
    SOUTH = 2
    WEST = 3

    @property
    def offset(self) -> tuple[int, int]:
        return _YAW_OFFSETS[self]

    def left(self) -> "Yaw":
        return Yaw((self - 1) % 4)

    def right(self) -> "Yaw":
        return Yaw((self + 1) % 4)


_YAW_OFFSETS = {Yaw.NORTH: (0, 1), Yaw.EAST: (1, 0), Yaw.SOUTH: (0, -1), Yaw.WEST: (-1, 0)}


class SubgoalType(enum.IntEnum):
    PICKUP = 0
    PUT = 1
    TOGGLE_ON = 2
    TOGGLE_OFF = 3
    OPEN = 4
    CLOSE = 5
    SLICE = 6
    STOP = 7

    @property
    def label(self) -> str:
        return _SUBGOAL_LABELS[self]

    @classmethod
    def from_label(cls, label: str) -> "SubgoalType":
        for st, name in _SUBGOAL_LABELS.items():
            if name.lower() == label.lower():
                return st
        raise ValueError(f"unknown subgoal type {label!r}")


_SUBGOAL_LABELS = {
    SubgoalType.PICKUP: "PickUp",
    SubgoalType.PUT: "Put",
    SubgoalType.TOGGLE_ON: "ToggleOn",
    SubgoalType.TOGGLE_OFF: "ToggleOff",
    SubgoalType.OPEN: "Open",
    SubgoalType.CLOSE: "Close",
    SubgoalType.SLICE: "Slice",
    SubgoalType.STOP: "Stop",
}

INTERACTION_TYPES = tuple(st for st in SubgoalType if st is not SubgoalType.STOP)


def load_class_table(path: str | Path | None = None) -> list[dict]:
    """Read the class/affordance table. Defaults to the packaged table."""
    if path is None:
        text = resources.files("voxagent.data").joinpath("classes.yaml").read_text()
    else:
        text = Path(path).read_text()
    return check_class_table(yaml.safe_load(text)["classes"])


def check_class_table(records: list[dict]) -> list[dict]:
    seen = set()
    for i, rec in enumerate(records):
        name = rec.get("name")
        if not name:
            raise ValueError(f"class record {i} has no name")
        if name in seen:
            raise ValueError(f"duplicate class {name!r}")
        seen.add(name)
        affs = set(rec.get("affordances", []))
        unknown = affs - set(AFFORDANCES) - {"free"}
        if unknown:
            raise ValueError(f"class {name!r}: unknown affordances {sorted(unknown)}")
        decided = {"ground", "obstacle", "free"} & affs
        if len(decided) != 1:
            raise ValueError(f"class {name!r} must declare exactly one of ground/obstacle/free")
    return records


@dataclass(frozen=True)
class GridConfig:
    dims_x: int = 61
    dims_y: int = 61
    dims_z: int = 10
    voxel_size: float = 0.25
    class_names: tuple[str, ...] = ()
    class_affordances: dict[str, frozenset[str]] = field(default_factory=dict, compare=False)
    sliceable: frozenset[str] = frozenset()
    variable: frozenset[str] = frozenset()

    def __post_init__(self):
        if min(self.dims_x, self.dims_y, self.dims_z) < 1:
            raise ValueError("grid dims must be >= 1")
        if self.voxel_size <= 0:
            raise ValueError("voxel_size must be positive")
        if len(self.class_names) < 1:
            raise ValueError("need at least one class")
        missing = [c for c in self.class_names if c not in self.class_affordances]
        if missing:
            raise ValueError(f"no affordance record for {missing}")
        aff = np.array(
            [[a in self.class_affordances[c] for a in AFFORDANCES] for c in self.class_names], dtype=bool
        )
        aff.setflags(write=False)
        object.__setattr__(self, "_aff", aff)

    @classmethod
    def from_table(cls, records: list[dict] | None = None, **dims) -> "GridConfig":
        records = load_class_table() if records is None else check_class_table(records)
        names = tuple(r["name"] for r in records)
        affs = {r["name"]: frozenset(set(r.get("affordances", [])) - {"free"}) for r in records}
        return cls(
            class_names=names,
            class_affordances=affs,
            sliceable=frozenset(r["name"] for r in records if r.get("sliceable")),
            variable=frozenset(r["name"] for r in records if r.get("variable")),
            **dims,
        )

    def with_dims(self, dims_x: int, dims_y: int, dims_z: int, voxel_size: float | None = None):
        return replace(
            self,
            dims_x=dims_x,
            dims_y=dims_y,
            dims_z=dims_z,
            voxel_size=self.voxel_size if voxel_size is None else voxel_size,
        )

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.dims_x, self.dims_y, self.dims_z)

    def class_index(self, name: str) -> int:
        try:
            return self.class_names.index(name)
        except ValueError:
            raise KeyError(f"unknown class {name!r}") from None

    def has_affordance(self, name: str, affordance: str) -> bool:
        return affordance in self.class_affordances[name]

    def affordance_matrix(self) -> np.ndarray:
        """Boolean [C x 6] table, columns ordered as AFFORDANCES."""
        return self._aff

    def class_mask(self, affordance: str) -> np.ndarray:
        return self.affordance_matrix()[:, AFFORDANCES.index(affordance)]

    def height_slice(self, lo: float, hi: float) -> slice:
        """z-index range of voxels whose lower face lies in [lo, hi)."""
        z0 = max(0, int(np.ceil(lo / self.voxel_size - 1e-9)))
        z1 = min(self.dims_z, int(np.ceil(hi / self.voxel_size - 1e-9)))
        return slice(z0, max(z0, z1))


@dataclass(frozen=True)
class Pose:
    x: int
    y: int
    yaw: Yaw = Yaw.NORTH
    pitch: int = 30

    def __post_init__(self):
        object.__setattr__(self, "yaw", Yaw(self.yaw))
        if self.pitch not in PITCHES:
            raise ValueError(f"pitch {self.pitch} not in {PITCHES}")

    def validate(self, cfg: GridConfig) -> "Pose":
        if not (0 <= self.x < cfg.dims_x and 0 <= self.y < cfg.dims_y):
            raise ValueError(f"pose ({self.x}, {self.y}) outside grid {cfg.dims_x}x{cfg.dims_y}")
        return self

    @property
    def cell(self) -> tuple[int, int]:
        return (self.x, self.y)


@dataclass
class StateRepr:
    semantic: np.ndarray  # [X, Y, Z, C] float32 in [0, 1]
    observed: np.ndarray  # [X, Y, Z] bool
    inventory: np.ndarray  # [C] uint8, at most one set
    pose: Pose

    @classmethod
    def empty(cls, cfg: GridConfig, pose: Pose | None = None) -> "StateRepr":
        pose = Pose(cfg.dims_x // 2, cfg.dims_y // 2) if pose is None else pose
        return cls(
            semantic=np.zeros(cfg.shape + (cfg.num_classes,), dtype=np.float32),
            observed=np.zeros(cfg.shape, dtype=bool),
            inventory=np.zeros(cfg.num_classes, dtype=np.uint8),
            pose=pose,
        )

    def copy(self) -> "StateRepr":
        return StateRepr(self.semantic.copy(), self.observed.copy(), self.inventory.copy(), self.pose)

    @property
    def held_class(self) -> int | None:
        idx = np.flatnonzero(self.inventory)
        return int(idx[0]) if idx.size else None


@dataclass(frozen=True, eq=False)
class Subgoal:
    stype: SubgoalType
    arg_class: int | None
    mask: np.ndarray  # [X, Y, Z] in [0, 1]

    def __post_init__(self):
        if self.stype is SubgoalType.STOP and (self.arg_class is not None or np.any(self.mask)):
            raise ValueError("Stop subgoal carries no argument or mask")

    @classmethod
    def stop(cls, cfg: GridConfig) -> "Subgoal":
        return cls(SubgoalType.STOP, None, np.zeros(cfg.shape, dtype=np.float32))

    @property
    def is_stop(self) -> bool:
        return self.stype is SubgoalType.STOP

    def with_mask(self, mask: np.ndarray) -> "Subgoal":
        return Subgoal(self.stype, self.arg_class, mask)


def present(sem: np.ndarray, threshold: float = PRESENCE_THRESHOLD) -> np.ndarray:
    return sem > threshold


def affordance_features(state: StateRepr, cfg: GridConfig) -> np.ndarray:
    """Top-down [7 x X x Y] binary affordance planes."""
    hits = present(state.semantic)  # X Y Z C
    aff = cfg.affordance_matrix().astype(np.int32)  # C x 6
    per_voxel = np.tensordot(hits.astype(np.int32), aff, axes=([3], [0])) > 0  # X Y Z 6
    cols = per_voxel.any(axis=2)  # X Y 6
    out = np.zeros((len(FEATURE_CHANNELS), cfg.dims_x, cfg.dims_y), dtype=np.uint8)
    out[:6] = np.moveaxis(cols, 2, 0)
    out[6] = state.observed.any(axis=2)
    return out


def occupied_columns(sem: np.ndarray, cfg: GridConfig, height_range=(0.0, 1.75)) -> np.ndarray:
    """[X x Y] mask of columns with an obstacle-class voxel inside the height range."""
    zs = cfg.height_slice(*height_range)
    obst = cfg.class_mask("obstacle")
    return present(sem[:, :, zs][..., obst]).any(axis=(2, 3))


def ground_columns(sem: np.ndarray, cfg: GridConfig, classes=("Floor", "Rug")) -> np.ndarray:
    idx = [cfg.class_index(c) for c in classes if c in cfg.class_names]
    return present(sem[..., idx]).any(axis=(2, 3))


def empty_history(cfg: GridConfig) -> np.ndarray:
    return np.zeros((len(INTERACTION_TYPES), cfg.dims_x, cfg.dims_y), dtype=np.int64)


def update_history_tensor(h: np.ndarray, g: Subgoal) -> np.ndarray:
    """Count the subgoal's 2D footprint under its interaction type."""
    if g.is_stop:
        raise ValueError("Stop subgoals are not recorded in the history tensor")
    out = h.copy()
    out[int(g.stype)] += (np.asarray(g.mask) > PRESENCE_THRESHOLD).any(axis=2).astype(h.dtype)
    return out


def state_summary(state: StateRepr) -> np.ndarray:
    spatial_max = state.semantic.reshape(-1, state.semantic.shape[-1]).max(axis=0)
    return np.concatenate([state.inventory.astype(np.float32), spatial_max.astype(np.float32)])


def _ego_index(shape: tuple[int, int], pose: Pose):
    """For each egocentric cell, the allocentric source cell and its validity."""
    nx, ny = shape
    cx, cy = nx // 2, ny // 2
    i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    dx, dy = i - cx, j - cy
    # rotate the canonical (north-facing) offset clockwise by the heading
    for _ in range(int(pose.yaw)):
        dx, dy = dy, -dx
    sx, sy = pose.x + dx, pose.y + dy
    valid = (sx >= 0) & (sx < nx) & (sy >= 0) & (sy < ny)
    return sx, sy, valid


def ego_transform(map2d: np.ndarray, pose: Pose) -> np.ndarray:
    """Re-center a [K x X x Y] map on the agent with its heading pointing north."""
    sx, sy, valid = _ego_index(map2d.shape[1:], pose)
    out = np.zeros_like(map2d)
    out[:, valid] = map2d[:, sx[valid], sy[valid]]
    return out


def allo_transform(map2d: np.ndarray, pose: Pose) -> np.ndarray:
    """Inverse of ego_transform; cells with no egocentric source are zero."""
    sx, sy, valid = _ego_index(map2d.shape[1:], pose)
    out = np.zeros_like(map2d)
    out[:, sx[valid], sy[valid]] = map2d[:, valid]
    return out
