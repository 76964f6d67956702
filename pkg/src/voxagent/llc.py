"""Low-level controller: turns one subgoal into a stream of environment actions."""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .actions import FAIL, PASS, EnvAction, Interaction, LlcSignal, NavAction
from .camera import CameraIntrinsics, pixel_rays, traverse
from .core import (
    PITCHES,
    PRESENCE_THRESHOLD,
    GridConfig,
    Pose,
    StateRepr,
    Subgoal,
    Yaw,
    ground_columns,
    occupied_columns,
    present,
)
from .vin import VinAction, VinConfig, VinGrid, build_vin_grid, greedy_action, map_action, value_iteration

NOMINAL_PITCH = 30


class EmptyGroundSet(RuntimeError):
    pass


class NoValidPose(RuntimeError):
    pass


class Phase(enum.Enum):
    SCAN_ROTATE = "ScanRotate"
    EXPLORE = "Explore"
    NAVIGATE_TO_EXPLORATION = "NavigateToExploration"
    NAVIGATE_TO_INTERACTION = "NavigateToInteraction"
    FINAL_ROTATE = "FinalRotate"
    INTERACT = "Interact"
    DONE = "Done"


@dataclass(frozen=True)
class LlcConfig:
    exploration_budget: int = 8
    reach_cells: int = 6
    heading_half_angle: float = 45.0
    pose_resamples: int = 1
    retarget_budget: int = 12
    nav_step_limit: int | None = None  # default: 2 * (X + Y) per navigation target
    height_range: tuple[float, float] = (0.0, 1.75)


def ground_set(state: StateRepr, grid: GridConfig, height_range=(0.0, 1.75)) -> np.ndarray:
    return ground_columns(state.semantic, grid) & ~occupied_columns(state.semantic, grid, height_range)


def frontier_set(state: StateRepr, grid: GridConfig, height_range=(0.0, 1.75)) -> np.ndarray:
    pg = ground_set(state, grid, height_range)
    unseen = ~state.observed.any(axis=2)
    # off-grid neighbours do not count as unobserved space
    pad = np.pad(unseen, 1, constant_values=False)
    near = pad[2:, 1:-1] | pad[:-2, 1:-1] | pad[1:-1, 2:] | pad[1:-1, :-2]
    return pg & near


def sample_exploration_position(state: StateRepr, rng: np.random.Generator, grid: GridConfig, height_range=(0.0, 1.75)):
    pg = ground_set(state, grid, height_range)
    if not pg.any():
        raise EmptyGroundSet("no observed, unoccupied floor")
    pf = pg & frontier_set(state, grid, height_range)
    cells = np.argwhere(pf if pf.any() else pg)
    x, y = cells[rng.integers(len(cells))]
    return int(x), int(y)


def nearest_pitch(deg: float) -> int:
    # ties go to the smaller bucket
    return min(PITCHES, key=lambda p: (abs(p - deg), p))


def interaction_candidates(state: StateRepr, mask: np.ndarray, grid: GridConfig, cfg: LlcConfig, intr: CameraIntrinsics) -> list[Pose]:
    vox = np.argwhere(mask > PRESENCE_THRESHOLD)
    if vox.size == 0:
        return []
    s = grid.voxel_size
    footprint = np.zeros((grid.dims_x, grid.dims_y), dtype=bool)
    footprint[vox[:, 0], vox[:, 1]] = True
    centroid = (vox.mean(axis=0) + 0.5) * s
    cols = np.argwhere(footprint)
    ok = ground_set(state, grid, cfg.height_range) & state.observed.any(axis=2) & ~footprint
    cells = np.argwhere(ok)
    if cells.size == 0:
        return []
    cheb = np.abs(cells[:, None, :] - cols[None, :, :]).max(axis=2).min(axis=1)
    cells = cells[cheb <= cfg.reach_cells]
    seen = line_of_sight(state, mask, cells, grid, intr)
    if seen.any():  # with no clear view anywhere, fall back to reach alone
        cells = cells[seen]
    out = []
    for x, y in cells:
        dx = centroid[0] - (x + 0.5) * s
        dy = centroid[1] - (y + 0.5) * s
        dist = math.hypot(dx, dy)
        pitch = nearest_pitch(math.degrees(math.atan2(intr.camera_height - centroid[2], dist)))
        for yaw in Yaw:
            hx, hy = yaw.offset
            ang = math.degrees(math.atan2(hx * dy - hy * dx, hx * dx + hy * dy))
            if abs(ang) <= cfg.heading_half_angle + 1e-9:
                out.append(Pose(int(x), int(y), yaw, pitch))
    return out


def line_of_sight(state: StateRepr, mask: np.ndarray, cells: np.ndarray, grid: GridConfig, intr: CameraIntrinsics) -> np.ndarray:
    """For each cell, whether a straight line from the camera reaches some target voxel
    before any other mapped voxel. Unobserved space counts as clear."""
    vox = np.argwhere(mask > PRESENCE_THRESHOLD)
    if cells.size == 0 or vox.size == 0:
        return np.zeros(len(cells), dtype=bool)
    s = grid.voxel_size
    target = mask > PRESENCE_THRESHOLD
    solid = present(state.semantic[..., 1:]).any(axis=-1) & ~target
    eyes = np.column_stack([(cells + 0.5) * s, np.full(len(cells), intr.camera_height)])
    pair_cell = np.repeat(np.arange(len(cells)), len(vox))
    rel = ((np.tile(vox, (len(cells), 1)) + 0.5) * s) - eyes[pair_cell]
    visible = np.zeros(len(cells), dtype=bool)
    # traverse() takes a single origin, so one batch of rays per cell
    for i, eye in enumerate(eyes):
        d = rel[pair_cell == i]
        alive = np.ones(len(d), dtype=bool)
        start = np.floor(eye / s).astype(np.int64)
        for idx, v, _t0, _t1 in traverse(eye, d, grid.shape, s, t_limit=1.0, alive=alive):
            hit_t = target[v[:, 0], v[:, 1], v[:, 2]]
            if hit_t.any():
                visible[i] = True
                break
            own = (v == start).all(axis=1)
            alive[idx[solid[v[:, 0], v[:, 1], v[:, 2]] & ~own]] = False
    return visible


def sample_interaction_pose(
    state: StateRepr,
    subgoal: Subgoal,
    rng: np.random.Generator,
    grid: GridConfig,
    cfg: LlcConfig | None = None,
    intr: CameraIntrinsics | None = None,
) -> Pose:
    cfg = LlcConfig() if cfg is None else cfg
    intr = CameraIntrinsics() if intr is None else intr
    cands = interaction_candidates(state, subgoal.mask, grid, cfg, intr)
    if not cands:
        raise NoValidPose("no observed free cell within reach of the target")
    return cands[int(rng.integers(len(cands)))]


def mask_along_rays(mask3d: np.ndarray, intr: CameraIntrinsics, pose: Pose, voxel_size: float) -> np.ndarray:
    """Per pixel, the max of the 3D mask over every voxel its ray passes through."""
    origin, dirs = pixel_rays(intr, pose, voxel_size)
    flat = dirs.reshape(-1, 3)
    best = np.zeros(flat.shape[0], dtype=np.float32)
    if np.any(mask3d > 0):
        for idx, vox, _t0, _t1 in traverse(origin, flat, mask3d.shape, voxel_size):
            np.maximum.at(best, idx, mask3d[vox[:, 0], vox[:, 1], vox[:, 2]])
    return best.reshape(intr.height, intr.width)


def interact_mask(state: StateRepr, seg: np.ndarray, subgoal: Subgoal, intr: CameraIntrinsics, voxel_size: float) -> np.ndarray:
    ma = seg[..., subgoal.arg_class] > PRESENCE_THRESHOLD
    mb = mask_along_rays(np.asarray(subgoal.mask, dtype=np.float32), intr, state.pose, voxel_size) > PRESENCE_THRESHOLD
    return ma & mb


@dataclass
class LlcState:
    phase: Phase = Phase.SCAN_ROTATE
    pending_actions: deque = field(default_factory=deque)
    target_pose: Pose | None = None
    nav_goal: tuple[int, int] | None = None
    rotations_left: int = 0
    explorations: int = 0
    resamples: int = 0
    retargets: int = 0
    nav_steps: int = 0
    mask: np.ndarray | None = None
    started: bool = False
    reason: str = ""
    awaiting: bool = False
    last_success: bool | None = None


def _turns(frm: Yaw, to: Yaw) -> list[NavAction]:
    d = (int(to) - int(frm)) % 4
    return {0: [], 1: [NavAction.ROTATE_RIGHT], 2: [NavAction.ROTATE_RIGHT] * 2, 3: [NavAction.ROTATE_LEFT]}[d]


def _looks(frm: int, to: int) -> list[NavAction]:
    n = (to - frm) // 30
    return [NavAction.LOOK_DOWN] * n if n > 0 else [NavAction.LOOK_UP] * (-n)


class LowLevelController:
    """Executes one subgoal at a time.

    `ground`, if given, maps (subgoal, state) to a fresh 3D instance mask; it is
    consulted whenever the current mask is empty, typically after a scan, and
    again whenever every voxel of the current target drops out of the map,
    which is how misdetected targets get abandoned.
    Without it the subgoal's own mask is used and the argument class counts as
    found as soon as any voxel of it is mapped.
    """

    def __init__(
        self,
        grid: GridConfig,
        intr: CameraIntrinsics,
        cfg: LlcConfig | None = None,
        vin_cfg: VinConfig | None = None,
        ground: Callable[[Subgoal, StateRepr], np.ndarray] | None = None,
    ):
        self.grid = grid
        self.intr = intr
        self.cfg = LlcConfig() if cfg is None else cfg
        self.vin_cfg = VinConfig() if vin_cfg is None else vin_cfg
        self.ground = ground
        self.state = LlcState()
        self._vin_grid: VinGrid | None = None
        self._q = None
        self.vin_solves = 0

    @property
    def nav_limit(self) -> int:
        return self.cfg.nav_step_limit or 2 * (self.grid.dims_x + self.grid.dims_y)

    def reset(self, subgoal: Subgoal | None = None) -> LlcState:
        self.state = LlcState(mask=None if subgoal is None else np.asarray(subgoal.mask, dtype=np.float32))
        return self.state

    def notify(self, action: EnvAction, success: bool) -> None:
        """Feed back the result of the last emitted action."""
        if isinstance(action, Interaction) and self.state.awaiting:
            self.state.last_success = bool(success)

    # -- navigation ---------------------------------------------------------

    def q_values(self, state: StateRepr, goal: tuple[int, int]) -> np.ndarray:
        vg = build_vin_grid(state, goal, self.vin_cfg, self.grid)
        obstacle = vg.obstacle.copy()
        obstacle[state.pose.cell] = False
        vg = VinGrid(obstacle, vg.unobserved, vg.goal)
        if not vg.same_as(self._vin_grid):
            self._vin_grid = vg
            self._q = value_iteration(vg, self.vin_cfg)
            self.vin_solves += 1
        return self._q

    def _nav_action(self, state: StateRepr, goal: tuple[int, int]) -> NavAction | None:
        """Next move toward goal, or None on arrival / VIN Stop."""
        if state.pose.cell == goal:
            return None
        q = self.q_values(state, goal)
        a = greedy_action(q, state.pose.cell)
        if a is VinAction.STOP:
            return None
        return map_action(state.pose.yaw, a)

    # -- flow ---------------------------------------------------------------

    def _found(self, subgoal: Subgoal, state: StateRepr) -> bool:
        st = self.state
        if st.mask is not None and np.any(st.mask > PRESENCE_THRESHOLD):
            return True
        if self.ground is not None:
            st.mask = np.asarray(self.ground(subgoal, state), dtype=np.float32)
            return bool(np.any(st.mask > PRESENCE_THRESHOLD))
        return bool(np.any(state.semantic[..., subgoal.arg_class] > PRESENCE_THRESHOLD))

    def _start_scan(self, state: StateRepr):
        st = self.state
        st.phase = Phase.SCAN_ROTATE
        st.pending_actions = deque(_looks(state.pose.pitch, NOMINAL_PITCH) + [NavAction.ROTATE_LEFT] * 3)
        st.rotations_left = 3

    def _plan_interaction(self, subgoal: Subgoal, state: StateRepr, rng) -> bool:
        st = self.state
        try:
            pose = sample_interaction_pose(state, subgoal.with_mask(st.mask), rng, self.grid, self.cfg, self.intr)
        except NoValidPose:
            return False
        st.target_pose = pose
        st.nav_goal = pose.cell
        st.nav_steps = 0
        st.phase = Phase.NAVIGATE_TO_INTERACTION
        return True

    def step(self, subgoal: Subgoal, state: StateRepr, seg: np.ndarray | None, rng) -> EnvAction | LlcSignal:
        if subgoal.is_stop:
            raise ValueError("the low-level controller does not execute Stop")
        st = self.state
        if not st.started:
            st.started = True
            if st.mask is None:
                st.mask = np.asarray(subgoal.mask, dtype=np.float32)
            self._start_scan(state)
        for _ in range(64):  # phase changes without an action; bounded for safety
            out = self._advance(subgoal, state, seg, rng)
            if out is not None:
                return out
        return self._finish(FAIL, "phase loop")

    def _finish(self, sig: LlcSignal, reason: str = "") -> LlcSignal:
        self.state.reason = reason or ("interaction succeeded" if sig is PASS else "interaction failed")
        self.state.phase = Phase.DONE
        self.state.awaiting = False
        self.state.pending_actions.clear()
        return sig

    def _target_lost(self, subgoal, state) -> bool:
        st = self.state
        if self.ground is None or st.mask is None:
            return False
        sel = st.mask > PRESENCE_THRESHOLD
        return bool(sel.any()) and not bool((state.semantic[..., subgoal.arg_class][sel] > PRESENCE_THRESHOLD).any())

    def _retarget(self, subgoal, state, rng):
        """The mapped target disappeared (it was a misdetection): ground again and re-plan."""
        st = self.state
        if st.retargets >= self.cfg.retarget_budget:
            return self._finish(FAIL, "retarget budget")
        st.retargets += 1
        st.mask = np.asarray(self.ground(subgoal, state), dtype=np.float32)
        st.pending_actions.clear()
        if not np.any(st.mask > PRESENCE_THRESHOLD):
            st.phase = Phase.EXPLORE
        elif not self._plan_interaction(subgoal, state, rng):
            return self._finish(FAIL, "retarget pose")
        return None

    def _advance(self, subgoal, state, seg, rng):
        st = self.state
        c = self.cfg
        if st.phase in (Phase.NAVIGATE_TO_INTERACTION, Phase.FINAL_ROTATE, Phase.INTERACT) and self._target_lost(
            subgoal, state
        ):
            return self._retarget(subgoal, state, rng)
        if st.phase is Phase.DONE:
            if st.awaiting and st.last_success is not None:
                return self._finish(PASS if st.last_success else FAIL)
            return FAIL

        if st.phase is Phase.SCAN_ROTATE:
            if st.pending_actions:
                a = st.pending_actions.popleft()
                if a is NavAction.ROTATE_LEFT:
                    st.rotations_left -= 1
                return a
            if self._found(subgoal, state):
                if not self._plan_interaction(subgoal, state, rng):
                    return self._finish(FAIL, "no interaction pose")
            else:
                st.phase = Phase.EXPLORE
            return None

        if st.phase is Phase.EXPLORE:
            if st.explorations >= c.exploration_budget:
                return self._finish(FAIL, "exploration budget")
            st.explorations += 1
            try:
                st.nav_goal = sample_exploration_position(state, rng, self.grid, c.height_range)
            except EmptyGroundSet:
                return self._finish(FAIL, "empty ground set")
            st.nav_steps = 0
            st.phase = Phase.NAVIGATE_TO_EXPLORATION
            return None

        if st.phase is Phase.NAVIGATE_TO_EXPLORATION:
            a = self._nav_action(state, st.nav_goal) if st.nav_steps < self.nav_limit else None
            if a is None:
                self._start_scan(state)
                return None
            st.nav_steps += 1
            return a

        if st.phase is Phase.NAVIGATE_TO_INTERACTION:
            if st.nav_steps >= self.nav_limit:
                a = None
            else:
                a = self._nav_action(state, st.nav_goal)
            if a is not None:
                st.nav_steps += 1
                return a
            if state.pose.cell != st.nav_goal:
                if st.resamples >= c.pose_resamples:
                    return self._finish(FAIL, "navigation stopped")
                st.resamples += 1
                if not self._plan_interaction(subgoal, state, rng):
                    return self._finish(FAIL, "no interaction pose")
                return None
            st.phase = Phase.FINAL_ROTATE
            tp = st.target_pose
            st.pending_actions = deque(_turns(state.pose.yaw, tp.yaw) + _looks(state.pose.pitch, tp.pitch))
            return None

        if st.phase is Phase.FINAL_ROTATE:
            if st.pending_actions:
                return st.pending_actions.popleft()
            if state.pose != st.target_pose:
                # a look action failed at a pitch limit; should not happen with valid buckets
                return self._finish(FAIL, "pose mismatch")
            st.phase = Phase.INTERACT
            return None

        if st.phase is Phase.INTERACT:
            if seg is None:
                raise ValueError("interaction needs the current segmentation image")
            m2d = interact_mask(state, seg, subgoal.with_mask(st.mask), self.intr, self.grid.voxel_size)
            st.phase = Phase.DONE
            st.awaiting = True
            st.last_success = None
            return Interaction(subgoal.stype, m2d)

        raise AssertionError(st.phase)
