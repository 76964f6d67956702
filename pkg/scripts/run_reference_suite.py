"""Run every reference scene and print the metrics table.

    python scripts/run_reference_suite.py [--config configs/perturbed.yaml] [--seeds 0 1 2] [--out results.jsonl]
"""

import argparse
import json
from dataclasses import replace

from voxagent.harness import EpisodeConfig, eval_batch, summary_table
from voxagent.sim import reference_scenes


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config")
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--out")
    args = ap.parse_args()
    base = EpisodeConfig.load(args.config) if args.config else EpisodeConfig()
    rows = []
    for seed in args.seeds:
        summary = eval_batch(reference_scenes(), replace(base, seed=seed, snapshot_maps=False))
        print(f"seed {seed}")
        print(summary_table(summary))
        rows += summary["episodes"]
    if args.out:
        with open(args.out, "w") as fh:
            for r in rows:
                fh.write(json.dumps(r, sort_keys=True) + "\n")
    n = len(rows)
    print(f"overall SR {sum(r['success'] for r in rows) / n:.3f}  GC {sum(r['gc'] for r in rows) / n:.3f}  ({n} episodes)")


if __name__ == "__main__":
    main()
