"""Episode loop, batch evaluation, map snapshots."""

from __future__ import annotations

import io
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .actions import LlcSignal
from .core import GridConfig, StateRepr, Subgoal
from .hlc import SubgoalPolicy, TemplatePolicy, Vocabulary
from .llc import LlcConfig, LowLevelController
from .observation import ObsConfig, observe
from .sim.goals import EpisodeMetrics, goal_conditions
from .sim.render import NoiseConfig, render
from .sim.scene import load_scene_file
from .sim.world import WorldState, transition
from .vin import VinConfig

log = logging.getLogger(__name__)

MAP_MAGIC = "HLSMMAP v1"


@dataclass(frozen=True)
class EpisodeConfig:
    t_max: int = 1000
    seed: int = 0
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    retry_budget: int = 3
    llc: LlcConfig = field(default_factory=LlcConfig)
    vin: VinConfig = field(default_factory=VinConfig)
    obs: ObsConfig = field(default_factory=ObsConfig)
    max_redraws: int = 20
    snapshot_maps: bool = True

    def __post_init__(self):
        if self.t_max < 1:
            raise ValueError("t_max must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "EpisodeConfig":
        d = dict(d or {})
        sub = {"noise": NoiseConfig, "llc": LlcConfig, "vin": VinConfig, "obs": ObsConfig}
        for k, typ in sub.items():
            if k in d:
                v = {kk: tuple(vv) if isinstance(vv, list) else vv for kk, vv in (d[k] or {}).items()}
                d[k] = typ(**v)
        return cls(**d)

    @classmethod
    def load(cls, path: str | Path, **overrides) -> "EpisodeConfig":
        d = yaml.safe_load(Path(path).read_text()) or {}
        d.update(overrides)
        return cls.from_dict(d)


@dataclass
class EpisodeTrace:
    steps: list = field(default_factory=list)
    events: list = field(default_factory=list)
    metrics: EpisodeMetrics | None = None
    snapshots: list = field(default_factory=list)  # (step, map text)
    final_state: StateRepr | None = None
    final_world: WorldState | None = None

    def to_jsonl(self) -> str:
        lines = [json.dumps({"kind": "step", **s}, sort_keys=True) for s in self.steps]
        lines += [json.dumps({"kind": "event", **e}, sort_keys=True) for e in self.events]
        if self.metrics is not None:
            lines.append(json.dumps({"kind": "metrics", **asdict(self.metrics)}, sort_keys=True))
        return "\n".join(lines) + "\n"


def _subgoal_label(g: Subgoal, grid: GridConfig) -> str:
    if g.is_stop:
        return "Stop"
    return f"{g.stype.label}({grid.class_names[g.arg_class]})"


def _pose(p) -> list:
    return [p.x, p.y, p.yaw.name[0], p.pitch]


def run_episode(
    world: WorldState,
    policy: SubgoalPolicy | None = None,
    cfg: EpisodeConfig | None = None,
    vocab: Vocabulary | None = None,
) -> EpisodeTrace:
    """Run one episode: observe, draw subgoals as needed, act, until Stop or t_max."""
    cfg = EpisodeConfig() if cfg is None else cfg
    grid = world.grid
    task = world.task
    if task is None:
        raise ValueError("world has no task")
    vocab = Vocabulary.load(grid.class_names) if vocab is None else vocab
    if policy is None:
        policy = TemplatePolicy(grid, vocab, retry_budget=cfg.retry_budget)
    policy_rng, llc_rng, sensor_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(cfg.seed).spawn(3))
    trace = EpisodeTrace()
    history: list = []

    def reground(sg: Subgoal, st: StateRepr) -> np.ndarray:
        if hasattr(policy, "ground"):
            return policy.ground(task, st, history, sg.stype, sg.arg_class)
        return sg.mask

    llc = LowLevelController(grid, world.intrinsics, cfg.llc, cfg.vin, ground=reground)
    state = StateRepr.empty(grid, world.agent)
    obs = render(world, cfg.noise, sensor_rng, cfg.obs)
    subgoal: Subgoal | None = None
    counter = 0
    t = 0
    stopped = False

    while t < cfg.t_max and not stopped:
        state = observe(state, obs, subgoal, grid, world.intrinsics, cfg.obs)
        action = None
        draws = 0
        while action is None:
            if subgoal is None:
                if draws >= cfg.max_redraws:
                    trace.events.append({"t": t, "event": "forced_stop", "draws": draws})
                    stopped = True
                    break
                subgoal = policy.next(task, state, history, policy_rng)
                draws += 1
                trace.events.append({"t": t, "event": "draw", "subgoal": _subgoal_label(subgoal, grid), "index": counter})
                if subgoal.is_stop:
                    stopped = True
                    break
                llc.reset(subgoal)
            out = llc.step(subgoal, state, obs.seg, llc_rng)
            if isinstance(out, LlcSignal):
                ok = out is LlcSignal.PASS
                # record the mask the controller actually acted on
                used = subgoal.with_mask(llc.state.mask if llc.state.mask is not None else subgoal.mask)
                history.append((used, ok))
                counter += ok
                trace.events.append(
                    {"t": t, "event": out.value, "subgoal": _subgoal_label(subgoal, grid), "index": counter, "reason": llc.state.reason}
                )
                subgoal = None
                if ok:
                    _snapshot(trace, cfg, t, state)
                continue
            action = out
        if stopped:
            break
        world, ok = transition(world, action)
        llc.notify(action, ok)
        trace.steps.append(
            {"t": t, "action": str(action), "subgoal": _subgoal_label(subgoal, grid), "index": counter, "pose": _pose(world.agent), "success": ok}
        )
        t += 1
        obs = render(world, cfg.noise, sensor_rng, cfg.obs)

    sat, total = goal_conditions(task, world)
    trace.metrics = EpisodeMetrics(
        success=sat == total,
        goal_condition_rate=sat / total,
        steps=t,
        satisfied=sat,
        total=total,
        subgoal_outcomes=[[_subgoal_label(g, grid), ok] for g, ok in history],
    )
    _snapshot(trace, cfg, t, state, force=True)
    trace.final_state = state
    trace.final_world = world
    return trace


def _snapshot(trace: EpisodeTrace, cfg: EpisodeConfig, t: int, state: StateRepr, force: bool = False):
    if cfg.snapshot_maps or force:
        trace.snapshots.append((t, export_map(state)))


# -- map snapshots ------------------------------------------------------------


def export_map(state: StateRepr, path: str | Path | None = None, voxel_size: float = 0.25) -> str:
    """Sparse text snapshot; returns the text and writes it if a path is given."""
    sem = state.semantic
    x, y, z, c = sem.shape
    buf = io.StringIO()
    buf.write(f"{MAP_MAGIC}\n")
    buf.write(f"dims {x} {y} {z} {c} {voxel_size:g}\n")
    vals = np.round(sem.astype(np.float64), 4)
    recs = []
    for i, j, k, cc in np.argwhere(vals > 0):
        recs.append((int(i), int(j), int(k), int(cc), f"{vals[i, j, k, cc]:.4f}"))
    for i, j, k in np.argwhere(state.observed):
        recs.append((int(i), int(j), int(k), -1, "1.0000"))
    recs.sort(key=lambda r: r[:4])
    for r in recs:
        buf.write(f"{r[0]} {r[1]} {r[2]} {r[3]} {r[4]}\n")
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def import_map(source: str | Path) -> tuple[StateRepr, float]:
    text = Path(source).read_text() if isinstance(source, Path) or "\n" not in str(source) else str(source)
    lines = text.splitlines()
    if not lines or lines[0] != MAP_MAGIC:
        raise ValueError("not a map snapshot")
    head = lines[1].split()
    if head[0] != "dims" or len(head) != 6:
        raise ValueError("bad dims line")
    x, y, z, c = (int(v) for v in head[1:5])
    sem = np.zeros((x, y, z, c), dtype=np.float32)
    obs = np.zeros((x, y, z), dtype=bool)
    for n, line in enumerate(lines[2:], start=3):
        parts = line.split()
        if len(parts) != 5:
            raise ValueError(f"line {n}: expected 'x y z c p'")
        i, j, k, cc = (int(v) for v in parts[:4])
        p = float(parts[4])
        if cc == -1:
            obs[i, j, k] = p >= 0.5
        else:
            sem[i, j, k, cc] = p
    from .core import Pose

    state = StateRepr(sem, obs, np.zeros(c, dtype=np.uint8), Pose(0, 0))
    return state, float(head[5])


# -- batch evaluation ---------------------------------------------------------


def _eval_one(path: Path, cfg: EpisodeConfig) -> dict:
    try:
        world = load_scene_file(path)
    except (OSError, ValueError) as e:
        log.warning("skipping %s: %s", path, e)
        return {"scene": path.name, "error": str(e)}
    m = run_episode(world, cfg=cfg).metrics
    return {"scene": path.stem, "seed": cfg.seed, "success": m.success, "gc": round(m.goal_condition_rate, 6), "steps": m.steps}


def eval_batch(scenes, cfg: EpisodeConfig | None = None, out=None, workers: int = 1) -> dict:
    """Run every scene; SR and GC aggregate over the scenes that loaded."""
    cfg = EpisodeConfig() if cfg is None else cfg
    paths = sorted(Path(p) for p in scenes)
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(workers) as ex:
            results = list(ex.map(_eval_one, paths, [cfg] * len(paths)))
    else:
        results = [_eval_one(p, cfg) for p in paths]
    records = [r for r in results if "error" not in r]
    errors = [r for r in results if "error" in r]
    summary = summarize(records)
    summary["errors"] = errors
    if out is not None:
        with open(out, "w") as fh:
            for r in records:
                fh.write(json.dumps(r, sort_keys=True) + "\n")
            for e in errors:
                fh.write(json.dumps({"kind": "error", **e}, sort_keys=True) + "\n")
            fh.write(json.dumps({"kind": "summary", "sr": summary["sr"], "gc": summary["gc"], "n": summary["n"]}, sort_keys=True) + "\n")
    return summary


def summarize(records: list) -> dict:
    n = len(records)
    sr = sum(r["success"] for r in records) / n if n else 0.0
    gc = sum(r["gc"] for r in records) / n if n else 0.0
    return {"episodes": records, "n": n, "sr": sr, "gc": gc}


def summary_table(summary: dict) -> str:
    rows = [f"{'scene':<28}{'success':>8}{'gc':>8}{'steps':>7}"]
    for r in summary["episodes"]:
        rows.append(f"{r['scene']:<28}{str(r['success']):>8}{r['gc']:>8.3f}{r['steps']:>7}")
    for e in summary.get("errors", []):
        rows.append(f"{e['scene']:<28}  error: {e['error']}")
    rows.append(f"SR {summary['sr']:.3f}  GC {summary['gc']:.3f}  over {summary['n']} episodes")
    return "\n".join(rows)
