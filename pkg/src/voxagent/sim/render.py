"""Oracle sensor rendering by voxel ray casting."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..camera import CameraIntrinsics, pixel_rays, points_at_depth, traverse, voxel_of
from ..observation import ObsConfig, Observation
from .world import WorldState


@dataclass(frozen=True)
class NoiseConfig:
    depth_sigma: float = 0.0  # metres
    seg_flip: float = 0.0  # probability of replacing a pixel's label

    def __post_init__(self):
        if self.depth_sigma < 0 or not 0 <= self.seg_flip <= 1:
            raise ValueError("noise parameters out of range")

    @property
    def is_zero(self) -> bool:
        return self.depth_sigma == 0 and self.seg_flip == 0


@dataclass
class RayHits:
    cls: np.ndarray  # [H, W] class of first visible voxel, 0 for no hit
    inst: np.ndarray  # [H, W] index into ids, -1 for static or no hit
    bin: np.ndarray  # [H, W] depth bin, -1 where no bin sample lands in the hit voxel
    ids: list


_PALETTE: dict = {}


def palette(num_classes: int) -> np.ndarray:
    p = _PALETTE.get(num_classes)
    if p is None:
        p = np.random.default_rng(20240101).uniform(0.1, 0.9, size=(num_classes, 3))
        p[0] = (0.85, 0.9, 1.0)  # sky
        _PALETTE[num_classes] = p
    return p


def cast(world: WorldState, intr: CameraIntrinsics | None = None, cfg: ObsConfig | None = None) -> RayHits:
    """First visible voxel along every pixel ray plus the depth bin that lands inside it.

    The bin is the smallest bin whose back-projected point falls in the hit
    voxel, so projecting the rendered depth recovers exactly that voxel.
    """
    intr = world.intrinsics if intr is None else intr
    cfg = ObsConfig() if cfg is None else cfg
    g = world.grid
    s = g.voxel_size
    cls_grid, inst_grid, ids = world.label_grids()
    origin, dirs = pixel_rays(intr, world.agent, s)
    flat = dirs.reshape(-1, 3)
    n = flat.shape[0]
    hit_vox = np.full((n, 3), -1, dtype=np.int64)
    hit = np.zeros(n, dtype=bool)
    t_in = np.zeros(n)
    alive = np.ones(n, dtype=bool)
    max_d = cfg.max_depth
    for idx, vox, t0, _t1 in traverse(origin, flat, g.shape, s, alive=alive):
        c = cls_grid[vox[:, 0], vox[:, 1], vox[:, 2]]
        far = t0 > max_d
        alive[idx[far]] = False
        got = (c > 0) & ~far
        sel = idx[got]
        hit[sel] = True
        hit_vox[sel] = vox[got]
        t_in[sel] = t0[got]
        alive[sel] = False

    bins = np.full(n, -1, dtype=np.int64)
    todo = np.flatnonzero(hit)
    step = cfg.depth_resolution
    start = np.maximum(np.floor(t_in[todo] / step).astype(np.int64) - 1, 1)
    pending = np.ones(todo.size, dtype=bool)
    # a voxel spans at most ~0.45 m of ray parameter, so a handful of bins suffices
    for k in range(int(np.ceil(s * np.sqrt(3) / step)) + 4):
        b = start + k
        ok = pending & (b <= cfg.depth_bins - 2)
        if not ok.any():
            continue
        pts = points_at_depth(origin, flat[todo[ok]], b[ok] * step)
        same = np.all(voxel_of(pts, s) == hit_vox[todo[ok]], axis=1)
        sel = np.flatnonzero(ok)[same]
        bins[todo[sel]] = b[sel]
        pending[sel] = False

    cls = np.zeros(n, dtype=np.int64)
    inst = np.full(n, -1, dtype=np.int64)
    hv = hit_vox[hit]
    cls[hit] = cls_grid[hv[:, 0], hv[:, 1], hv[:, 2]]
    inst[hit] = inst_grid[hv[:, 0], hv[:, 1], hv[:, 2]]
    bins[~hit] = cfg.depth_bins - 1
    shape = (intr.height, intr.width)
    return RayHits(cls.reshape(shape), inst.reshape(shape), bins.reshape(shape), ids)


def instance_image(world: WorldState, intr: CameraIntrinsics | None = None):
    hits = cast(world, intr)
    return hits.inst, hits.ids


def depth_distribution(bins: np.ndarray, cfg: ObsConfig, sigma: float = 0.0) -> np.ndarray:
    """Per-pixel depth distribution [H, W, B].

    A resolved bin becomes a delta (or a discretised Gaussian of width sigma
    around it); bin -1 becomes the uniform distribution, which the confidence
    mask always rejects.
    """
    nb = cfg.depth_bins
    out = np.zeros(bins.shape + (nb,))
    resolved = bins >= 0
    if sigma > 0:
        centres = cfg.bin_depths()
        mu = bins[resolved, None] * cfg.depth_resolution
        w = np.exp(-0.5 * ((centres[None, :] - mu) / sigma) ** 2)
        out[resolved] = w / w.sum(axis=1, keepdims=True)
        # "no return" stays a clean delta: there is no surface to blur
        far = bins == nb - 1
        out[far] = 0
        out[far, nb - 1] = 1
    else:
        out[np.nonzero(resolved) + (bins[resolved],)] = 1.0
    out[~resolved] = 1.0 / nb
    return out


def render(
    world: WorldState,
    noise: NoiseConfig | None = None,
    rng: np.random.Generator | None = None,
    cfg: ObsConfig | None = None,
    intr: CameraIntrinsics | None = None,
    with_rgb: bool = False,
) -> Observation:
    noise = NoiseConfig() if noise is None else noise
    cfg = ObsConfig() if cfg is None else cfg
    intr = world.intrinsics if intr is None else intr
    hits = cast(world, intr, cfg)
    depth = depth_distribution(hits.bin, cfg, noise.depth_sigma)
    labels = hits.cls
    if noise.seg_flip > 0:
        if rng is None:
            raise ValueError("seg noise needs an rng")
        nc = world.grid.num_classes
        flip = rng.random(labels.shape) < noise.seg_flip
        other = rng.integers(1, nc, size=labels.shape)
        # a uniform draw over the other nc-1 classes
        other = np.where(other <= labels, other - 1, other)
        labels = np.where(flip, other, labels)
    seg = np.zeros(labels.shape + (world.grid.num_classes,), dtype=np.float32)
    np.put_along_axis(seg, labels[..., None], 1.0, axis=-1)
    rgb = np.moveaxis(palette(world.grid.num_classes)[hits.cls], -1, 0) if with_rgb else None
    return Observation(
        depth=depth,
        seg=seg,
        pose=world.agent,
        inventory=world.inventory(),
        instruction=world.instruction,
        rgb=rgb,
    )
