"""Success rate of the reference scenes as sensor noise grows.

For each (depth sigma, flip rate, seed) it runs every reference scene and
tallies successes, the reasons subgoals failed, and how many mapped voxels
disagree with the final ground truth.

    python scripts/noise_sweep.py --sigmas 0 0.05 --flips 0 0.005 0.01 0.02 --seeds 0 1 --out sweep.jsonl
"""

import argparse
import collections
import json

import numpy as np

from voxagent.harness import EpisodeConfig, run_episode
from voxagent.sim import NoiseConfig, load_scene_file, reference_scenes


def map_errors(trace) -> int:
    st, world = trace.final_state, trace.final_world
    gt = world.ground_truth_classes()
    sem = st.semantic
    wrong = st.observed & (sem.max(-1) > 0.5) & (sem.argmax(-1) != gt)
    return int(wrong.sum())


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sigmas", type=float, nargs="+", default=[0.05])
    ap.add_argument("--flips", type=float, nargs="+", default=[0.0, 0.002, 0.005, 0.01, 0.02])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--out")
    args = ap.parse_args()
    scenes = reference_scenes()
    fh = open(args.out, "w") if args.out else None
    print(f"{'sigma':>6}{'flip':>7}{'SR':>8}{'GC':>7}{'map err':>9}  fail reasons")
    for sigma in args.sigmas:
        for flip in args.flips:
            wins, gc, errs, reasons = 0, 0.0, [], collections.Counter()
            n = 0
            for seed in args.seeds:
                cfg = EpisodeConfig(seed=seed, noise=NoiseConfig(sigma, flip), snapshot_maps=False)
                for path in scenes:
                    tr = run_episode(load_scene_file(path), cfg=cfg)
                    m = tr.metrics
                    n += 1
                    wins += m.success
                    gc += m.goal_condition_rate
                    errs.append(map_errors(tr))
                    reasons.update(e["reason"] for e in tr.events if e["event"] == "Fail")
                    if fh:
                        rec = {"scene": path.stem, "seed": seed, "sigma": sigma, "flip": flip, "success": m.success,
                               "gc": round(m.goal_condition_rate, 6), "steps": m.steps, "map_errors": errs[-1]}
                        fh.write(json.dumps(rec, sort_keys=True) + "\n")
            top = ", ".join(f"{k} {v}" for k, v in reasons.most_common(3))
            print(f"{sigma:>6.3f}{flip:>7.3f}{wins:>4}/{n:<3}{gc / n:>7.3f}{np.mean(errs):>9.1f}  {top}", flush=True)
    if fh:
        fh.close()


if __name__ == "__main__":
    main()
