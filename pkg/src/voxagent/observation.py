"""Observation model: confidence masking, projection to voxels, accumulation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import CameraIntrinsics, in_bounds, pixel_rays, points_at_depth, project_points, voxel_of
from .core import GridConfig, Pose, StateRepr, Subgoal


@dataclass(frozen=True)
class ObsConfig:
    c1: float = 0.3
    c2: float = 1.0
    held_object_cull_distance: float = 0.7
    arg_seg_threshold: float = 0.5
    depth_bins: int = 50
    depth_resolution: float = 0.1
    interval_mass: float = 0.9

    def __post_init__(self):
        if not 0 < self.c1 <= self.c2:
            raise ValueError("need 0 < c1 <= c2")
        if self.depth_bins < 2:
            raise ValueError("need at least two depth bins")

    @property
    def max_depth(self) -> float:
        return (self.depth_bins - 1) * self.depth_resolution

    def bin_depths(self) -> np.ndarray:
        return np.arange(self.depth_bins) * self.depth_resolution


@dataclass
class Observation:
    """One step of sensor data.

    depth is [H, W, B] (per-pixel distribution over depth bins), seg is
    [H, W, C] (per-pixel class distribution), rgb is an optional [3, H, W]
    image in [0, 1].
    """

    depth: np.ndarray
    seg: np.ndarray
    pose: Pose
    inventory: np.ndarray
    instruction: str = ""
    rgb: np.ndarray | None = None


def expected_depth(depth: np.ndarray, cfg: ObsConfig) -> np.ndarray:
    return depth @ cfg.bin_depths()


def interval_width(depth: np.ndarray, cfg: ObsConfig) -> np.ndarray:
    """Width (m) of the narrowest run of contiguous bins holding `interval_mass` of each pixel.

    Width is measured between the depths the first and last bin represent,
    so a single-bin (delta) distribution has width 0.
    """
    b = depth.shape[-1]
    flat = depth.reshape(-1, b)
    cs = np.concatenate([np.zeros((flat.shape[0], 1)), np.cumsum(flat, axis=1)], axis=1)
    width = np.full(flat.shape[0], (b - 1) * cfg.depth_resolution)
    target = cfg.interval_mass - 1e-9
    # single-bin intervals first: the common case for sharp readings
    todo = np.flatnonzero(flat.max(axis=1) < target)
    width[flat.max(axis=1) >= target] = 0.0
    for w in range(1, b):
        if todo.size == 0:
            break
        mass = cs[todo, w + 1 :] - cs[todo, : b - w]
        ok = (mass >= target).any(axis=1)
        width[todo[ok]] = w * cfg.depth_resolution
        todo = todo[~ok]
    return width.reshape(depth.shape[:-1])


def confidence_mask(depth: np.ndarray, seg: np.ndarray, arg_class: int | None, cfg: ObsConfig) -> np.ndarray:
    if depth.shape[:2] != seg.shape[:2]:
        raise ValueError(f"depth {depth.shape[:2]} and seg {seg.shape[:2]} resolutions differ")
    w90 = interval_width(depth, cfg)
    e = expected_depth(depth, cfg)
    mask = w90 < cfg.c1 * e
    if arg_class is not None:
        mask |= (w90 < cfg.c2 * e) & (seg[..., arg_class] > cfg.arg_seg_threshold)
    return mask


_CENTROIDS: dict = {}


def _voxel_centroids(grid: GridConfig) -> np.ndarray:
    key = (grid.shape, grid.voxel_size)
    c = _CENTROIDS.get(key)
    if c is None:
        idx = np.stack(np.meshgrid(*[np.arange(n) for n in grid.shape], indexing="ij"), axis=-1)
        c = (idx + 0.5) * grid.voxel_size
        _CENTROIDS[key] = c
    return c


def project(
    depth: np.ndarray,
    seg: np.ndarray,
    mask: np.ndarray,
    intr: CameraIntrinsics,
    pose: Pose,
    inventory: np.ndarray,
    grid: GridConfig,
    cfg: ObsConfig,
):
    """Back-project confident pixels into a single-frame voxel map.

    Returns (semantic [X,Y,Z,C] float32, observed [X,Y,Z] bool). Points use the
    arg-max depth bin. The farthest bin means "no return within range" and
    yields no point. Free space is carved only through confident pixels.
    """
    if depth.shape[:2] != (intr.height, intr.width) or seg.shape[:2] != (intr.height, intr.width):
        raise ValueError("image resolution does not match camera intrinsics")
    pose.validate(grid)
    s = grid.voxel_size
    origin, dirs = pixel_rays(intr, pose, s)
    bins = depth.argmax(axis=-1)
    d = bins * cfg.depth_resolution
    trusted = mask.astype(bool)
    if np.any(inventory):
        # pixels this close are assumed to show the held object
        trusted &= d * np.linalg.norm(dirs, axis=-1) >= cfg.held_object_cull_distance
    keep = trusted & (bins > 0) & (bins < cfg.depth_bins - 1)
    points = points_at_depth(origin, dirs, d)
    vox = voxel_of(points[keep], s)
    vals = seg[keep]
    inb = in_bounds(vox, grid.shape)
    vox, vals = vox[inb], vals[inb]

    sem = np.zeros(grid.shape + (seg.shape[-1],), dtype=np.float32)
    obs = np.zeros(grid.shape, dtype=bool)
    if vox.size:
        # element-wise max over all points that land in the same voxel
        lin = np.ravel_multi_index((vox[:, 0], vox[:, 1], vox[:, 2]), grid.shape)
        order = np.argsort(lin, kind="stable")
        lin, vals = lin[order], vals[order].astype(np.float32)
        starts = np.flatnonzero(np.r_[True, lin[1:] != lin[:-1]])
        merged = np.maximum.reduceat(vals, starts, axis=0)
        sem.reshape(-1, sem.shape[-1])[lin[starts]] = merged
        obs.reshape(-1)[lin[starts]] = True

    centroids = _voxel_centroids(grid)
    u, v, z = project_points(centroids, intr, pose, s)
    in_view = (z > 0) & (u >= 0) & (u < intr.width) & (v >= 0) & (v < intr.height)
    e = expected_depth(depth, cfg)
    uu, vv = np.where(in_view, u, 0), np.where(in_view, v, 0)
    carved = in_view & (e[vv, uu] > z) & trusted[vv, uu]
    obs |= carved
    return sem, obs


def accumulate(prev_sem, prev_obs, new_sem, new_obs):
    o = new_obs.astype(prev_sem.dtype)[..., None]
    sem = new_sem * o + prev_sem * (1 - o)
    return sem.astype(prev_sem.dtype, copy=False), np.maximum(prev_obs, new_obs)


def observe(
    prev: StateRepr,
    obs: Observation,
    active_subgoal: Subgoal | None,
    grid: GridConfig,
    intr: CameraIntrinsics,
    cfg: ObsConfig,
) -> StateRepr:
    arg = None
    if active_subgoal is not None and not active_subgoal.is_stop:
        arg = active_subgoal.arg_class
    mask = confidence_mask(obs.depth, obs.seg, arg, cfg)
    new_sem, new_obs = project(obs.depth, obs.seg, mask, intr, obs.pose, obs.inventory, grid, cfg)
    sem, seen = accumulate(prev.semantic, prev.observed, new_sem, new_obs)
    return StateRepr(sem, seen, np.asarray(obs.inventory, dtype=np.uint8).copy(), obs.pose)
