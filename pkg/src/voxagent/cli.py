"""Command-line entry point: run, eval, render-map, augment, parse."""

from __future__ import annotations

import argparse
import glob
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from .core import GridConfig
from .harness import EpisodeConfig, eval_batch, import_map, run_episode, summary_table
from .hlc import UnknownClass, UnparseableInstruction, Vocabulary, parse_instruction
from .sim import AugmentParams, NoiseConfig, SceneError, augment, load_scene_file, reference_scenes
from .sim.render import palette


def _scene_path(name: str) -> Path:
    p = Path(name)
    if p.exists():
        return p
    for ref in reference_scenes():
        if ref.stem == name:
            return ref
    raise SystemExit(f"no such scene: {name}")


def _episode_config(args) -> EpisodeConfig:
    cfg = EpisodeConfig.load(args.config) if args.config else EpisodeConfig()
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.t_max is not None:
        over["t_max"] = args.t_max
    if args.noise is not None:
        over["noise"] = NoiseConfig(*args.noise)
    return replace(cfg, **over)


def cmd_run(args) -> int:
    cfg = _episode_config(args)
    world = load_scene_file(_scene_path(args.scene))
    tr = run_episode(world, cfg=cfg)
    if args.trace:
        Path(args.trace).write_text(tr.to_jsonl())
    if args.export_maps:
        out = Path(args.export_maps)
        out.mkdir(parents=True, exist_ok=True)
        for i, (t, text) in enumerate(tr.snapshots):
            (out / f"{world.name}_{i:03d}_t{t:04d}.map").write_text(text)
    m = tr.metrics
    rec = {"scene": world.name, "seed": cfg.seed, "success": m.success, "gc": round(m.goal_condition_rate, 6), "steps": m.steps}
    print(json.dumps(rec, sort_keys=True))
    return 0


def cmd_eval(args) -> int:
    cfg = _episode_config(args)
    scenes = sorted(glob.glob(args.scenes)) if args.scenes else reference_scenes()
    if not scenes:
        raise SystemExit(f"no scenes match {args.scenes!r}")
    summary = eval_batch(scenes, cfg, out=args.out, workers=args.workers)
    print(summary_table(summary))
    return 0


def top_down(state) -> np.ndarray:
    """[Y, X, 3] uint8 view of the highest confidently mapped voxel in each column, north up."""
    sem = state.semantic
    x, y, z, c = sem.shape
    cls = sem.argmax(axis=-1)
    conf = sem.max(axis=-1) > 0.5
    img = np.full((x, y, 3), 0.15)
    img[state.observed.any(axis=2)] = 0.35
    pal = palette(c)
    for k in range(z):  # higher layers paint over lower ones
        hit = conf[:, :, k] & (cls[:, :, k] > 0)
        img[hit] = pal[cls[:, :, k][hit]]
    return (np.flipud(np.swapaxes(img, 0, 1)) * 255).round().astype(np.uint8)


def cmd_render_map(args) -> int:
    from PIL import Image

    state, _ = import_map(Path(args.snapshot))
    img = Image.fromarray(top_down(state))
    img = img.resize((img.width * args.scale, img.height * args.scale), Image.NEAREST)
    img.save(args.out)
    return 0


def cmd_augment(args) -> int:
    from PIL import Image

    grid = GridConfig.from_table()
    rgb = np.asarray(Image.open(args.inp).convert("RGB"), dtype=np.float64) / 255.0
    seg = np.load(args.seg)
    if seg.ndim == 2:  # label image
        seg = np.eye(grid.num_classes, dtype=np.float32)[seg]
    if seg.shape[:2] != rgb.shape[:2]:
        raise SystemExit("image and segmentation sizes differ")
    if args.classes:
        variable = {grid.class_index(n) if not n.isdigit() else int(n) for n in args.classes.split(",")}
    else:
        variable = set(range(1, grid.num_classes))
    params = AugmentParams(args.sigma_additive, args.sigma_gain, args.sigma_multiplicative)
    out = augment(np.moveaxis(rgb, -1, 0), seg, variable, params, np.random.default_rng(args.seed))
    Image.fromarray((np.moveaxis(out, 0, -1) * 255).round().astype(np.uint8)).save(args.out)
    return 0


def cmd_parse(args) -> int:
    vocab = Vocabulary.load(GridConfig.from_table().class_names)
    try:
        task = parse_instruction(args.instruction, vocab)
    except (UnparseableInstruction, UnknownClass) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    d = {k: (v.value if hasattr(v, "value") else v) for k, v in asdict(task).items()}
    print(json.dumps(d, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="voxagent", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    def episode_opts(p):
        p.add_argument("--config", help="YAML episode config")
        p.add_argument("--seed", type=int)
        p.add_argument("--t-max", type=int)
        p.add_argument("--noise", type=float, nargs=2, metavar=("DEPTH_SIGMA", "SEG_FLIP"))

    p = sub.add_parser("run", help="run one episode")
    p.add_argument("--scene", required=True, help="scene file or reference scene name")
    p.add_argument("--export-maps", metavar="DIR")
    p.add_argument("--trace", metavar="FILE", help="write the JSONL trace")
    episode_opts(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eval", help="evaluate a batch of scenes")
    p.add_argument("--scenes", help="glob; defaults to the reference scenes")
    p.add_argument("--out", help="JSONL metrics file")
    p.add_argument("--workers", type=int, default=1)
    episode_opts(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("render-map", help="top-down PNG of a map snapshot")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--scale", type=int, default=8)
    p.set_defaults(func=cmd_render_map)

    p = sub.add_parser("augment", help="recolour an image by class")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--seg", required=True, help=".npy label image [H, W] or one-hot [H, W, C]")
    p.add_argument("--out", required=True)
    p.add_argument("--classes", help="comma-separated class names or indices; default all but background")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sigma-additive", type=float, default=0.1)
    p.add_argument("--sigma-gain", type=float, default=0.05)
    p.add_argument("--sigma-multiplicative", type=float, default=0.1)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("parse", help="parse an instruction into a task")
    p.add_argument("--instruction", required=True)
    p.set_defaults(func=cmd_parse)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except SceneError as e:
        print(f"scene error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
