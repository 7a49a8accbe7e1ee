"""Wall-clock of CCR, MM2r and MM (at least three iterations) on the same data and seed.

    python scripts/timing.py --n 1000 --repeats 3
"""

import argparse
import time

import numpy as np

from moegp.datasets import SplitSpec, gen_higdon, train_test_split
from moegp.moe import TrainConfig, train

CONFIGS = {"ccr": dict(algorithm="ccr"), "mm2r": dict(algorithm="mm2r"),
           "mm": dict(algorithm="mm", min_mm_iters=3)}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()
    tr, _ = train_test_split(gen_higdon(args.n, args.seed), SplitSpec(0.8, args.seed))
    best = {}
    for name, kw in CONFIGS.items():
        times = []
        for _ in range(args.repeats):
            t0 = time.perf_counter()
            _, trace = train(tr.X, tr.y, TrainConfig(seed=args.seed, **kw))
            times.append(time.perf_counter() - t0)
        best[name] = min(times)
        print(f"{name:>5}: best of {args.repeats} {best[name]:.2f}s ({len(trace)} iterations)")
    print(f"ccr/mm2r = {best['ccr'] / best['mm2r']:.2f}, mm2r/mm = {best['mm2r'] / best['mm']:.2f}")


if __name__ == "__main__":
    main()
