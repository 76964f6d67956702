"""Pinhole camera geometry and voxel ray traversal.

The simulator's renderer and the observation model both go through
`pixel_rays` / `points_at_depth` / `voxel_of`, so a depth reading produced by
one lands in exactly the same voxel when back-projected by the other.

Conventions: x east, y north, z up, metres. Pitch is positive looking down.
Depth is measured along the optical axis (z-depth), so ray directions are
scaled to have unit forward component.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Pose


@dataclass(frozen=True)
class CameraIntrinsics:
    width: int = 64
    height: int = 64
    horizontal_fov: float = 90.0
    camera_height: float = 1.5

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("image size must be >= 1")
        if not 0 < self.horizontal_fov < 180:
            raise ValueError("horizontal_fov must be in (0, 180)")

    @property
    def focal(self) -> float:
        return (self.width / 2) / math.tan(math.radians(self.horizontal_fov) / 2)


def camera_frame(pose: Pose, intr: CameraIntrinsics, voxel_size: float):
    """Camera origin and (forward, right, up) unit vectors in world coordinates."""
    hx, hy = pose.yaw.offset
    heading = np.array([hx, hy, 0.0])
    up = np.array([0.0, 0.0, 1.0])
    th = math.radians(pose.pitch)
    forward = math.cos(th) * heading - math.sin(th) * up
    cam_up = math.sin(th) * heading + math.cos(th) * up
    right = np.array([hy, -hx, 0.0], dtype=float)
    origin = np.array([(pose.x + 0.5) * voxel_size, (pose.y + 0.5) * voxel_size, intr.camera_height])
    return origin, forward, right, cam_up


def pixel_rays(intr: CameraIntrinsics, pose: Pose, voxel_size: float):
    """Origin (3,) and per-pixel directions [H, W, 3] with unit forward component."""
    origin, fwd, right, up = camera_frame(pose, intr, voxel_size)
    f = intr.focal
    xn = (np.arange(intr.width) + 0.5 - intr.width / 2) / f
    yn = (np.arange(intr.height) + 0.5 - intr.height / 2) / f
    dirs = fwd[None, None, :] + xn[None, :, None] * right[None, None, :] - yn[:, None, None] * up[None, None, :]
    return origin, dirs


def points_at_depth(origin: np.ndarray, dirs: np.ndarray, depth: np.ndarray) -> np.ndarray:
    return origin + depth[..., None] * dirs


def voxel_of(points: np.ndarray, voxel_size: float) -> np.ndarray:
    return np.floor(points / voxel_size).astype(np.int64)


def in_bounds(vox: np.ndarray, shape) -> np.ndarray:
    return np.all((vox >= 0) & (vox < np.asarray(shape)), axis=-1)


def project_points(points: np.ndarray, intr: CameraIntrinsics, pose: Pose, voxel_size: float):
    """World points [..., 3] -> (column u, row v, z-depth). Pixel indices are unclipped ints."""
    origin, fwd, right, up = camera_frame(pose, intr, voxel_size)
    rel = points - origin
    z = rel @ fwd
    with np.errstate(divide="ignore", invalid="ignore"):
        xn = (rel @ right) / z
        yn = -(rel @ up) / z
    f = intr.focal
    u = np.floor(xn * f + intr.width / 2)
    v = np.floor(yn * f + intr.height / 2)
    u = np.where(np.isfinite(u), u, -1).astype(np.int64)
    v = np.where(np.isfinite(v), v, -1).astype(np.int64)
    return u, v, z


def traverse(origin: np.ndarray, dirs: np.ndarray, shape, voxel_size: float, t_limit=np.inf, alive=None):
    """Amanatides-Woo traversal of many rays through a voxel grid.

    Yields ``(ray_idx, voxels, t_enter, t_exit)`` for every (ray, voxel) step,
    one grid step per iteration, in order of increasing t. ``t`` is the ray
    parameter, i.e. z-depth for `pixel_rays` directions. Setting
    ``alive[i] = False`` between iterations retires ray ``i``.
    """
    dirs = np.asarray(dirs, dtype=float).reshape(-1, 3)
    n = dirs.shape[0]
    shape = np.asarray(shape)
    vox = np.tile(np.floor(origin / voxel_size).astype(np.int64), (n, 1))
    step = np.sign(dirs).astype(np.int64)
    with np.errstate(divide="ignore", invalid="ignore"):
        tdelta = np.where(dirs != 0, voxel_size / np.abs(dirs), np.inf)
        boundary = (vox + (step > 0)) * voxel_size
        tmax = np.where(dirs != 0, (boundary - origin) / dirs, np.inf)
    t_enter = np.zeros(n)
    alive = np.ones(n, dtype=bool) if alive is None else alive
    alive &= in_bounds(vox, shape)
    while True:
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            return
        tm = tmax[idx]
        axis = tm.argmin(axis=1)
        t_exit = tm[np.arange(idx.size), axis]
        yield idx, vox[idx], t_enter[idx], t_exit
        vox[idx, axis] += step[idx, axis]
        t_enter[idx] = t_exit
        tmax[idx, axis] += tdelta[idx, axis]
        alive[idx] &= in_bounds(vox[idx], shape) & (t_exit <= t_limit)
