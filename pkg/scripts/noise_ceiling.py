"""Best attainable test R2 on noisy targets: score the true function itself.

For each seed the 80/20 split of a generated dataset is drawn as in training
and the noiseless function is used as the prediction.

    python scripts/noise_ceiling.py --dataset higdon --seeds 50
"""

import argparse

import numpy as np

from moegp.datasets import (SplitSpec, bernholdt_f, gen_bernholdt, gen_higdon, higdon_f,
                            train_test_split)
from moegp.moe import r_squared

TRUTH = {"higdon": (gen_higdon, lambda X: higdon_f(X[:, 0])),
         "bernholdt": (gen_bernholdt, bernholdt_f)}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dataset", choices=sorted(TRUTH), default="higdon")
    ap.add_argument("--n", type=int, default=1000)
    ap.add_argument("--seeds", type=int, default=50)
    args = ap.parse_args()
    gen, f = TRUTH[args.dataset]
    scores = []
    for seed in range(args.seeds):
        _, te = train_test_split(gen(args.n, seed), SplitSpec(0.8, seed))
        scores.append(r_squared(te.y, f(te.X)))
    scores = np.array(scores)
    print(f"{args.dataset}: R2 of the true function on noisy test sets over {args.seeds} seeds: "
          f"mean {scores.mean():.4f}, min {scores.min():.4f}, max {scores.max():.4f}")


if __name__ == "__main__":
    main()
