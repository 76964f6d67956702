"""Time value-iteration solves on full-size grids and compare greedy rollouts with BFS.

    python scripts/vin_benchmark.py [--grids 100] [--size 61]
"""

import argparse
import time
from collections import deque

import numpy as np

from voxagent.vin import MOVES, VinAction, VinConfig, VinGrid, greedy_action, value_iteration


def bfs(obstacle, goal):
    dist = np.full(obstacle.shape, -1)
    dist[goal] = 0
    q = deque([goal])
    while q:
        x, y = q.popleft()
        for dx, dy in MOVES:
            n = (x + dx, y + dy)
            if 0 <= n[0] < obstacle.shape[0] and 0 <= n[1] < obstacle.shape[1] and not obstacle[n] and dist[n] < 0:
                dist[n] = dist[x, y] + 1
                q.append(n)
    return dist


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--grids", type=int, default=100)
    ap.add_argument("--size", type=int, default=61)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    cfg = VinConfig(epsilon=0.0)
    solve_t, exact, total = [], 0, 0
    for _ in range(args.grids):
        obstacle = rng.random((args.size, args.size)) < rng.uniform(0.2, 0.35)
        free = np.argwhere(~obstacle)
        goal = tuple(free[rng.integers(len(free))])
        g = np.zeros_like(obstacle)
        g[goal] = True
        t0 = time.perf_counter()
        q = value_iteration(VinGrid(obstacle, np.zeros_like(obstacle), g), cfg)
        solve_t.append(time.perf_counter() - t0)
        dist = bfs(obstacle, goal)
        for s in np.argwhere((dist > 0) & (dist <= cfg.iterations)):
            cell, steps = tuple(s), 0
            while cell != goal and steps <= cfg.iterations:
                a = greedy_action(q, cell)
                if a is VinAction.STOP:
                    break
                cell = (cell[0] + MOVES[a][0], cell[1] + MOVES[a][1])
                steps += 1
            total += 1
            exact += cell == goal and steps == dist[tuple(s)]
    st = np.array(solve_t) * 1e3
    print(f"solve {st.mean():.1f} ms mean, {st.max():.1f} ms max over {args.grids} grids of {args.size}x{args.size}")
    print(f"greedy rollouts matching BFS length: {exact}/{total}")


if __name__ == "__main__":
    main()
