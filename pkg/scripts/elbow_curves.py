"""Joint k-means inertia versus L and the elbow choice, for several output weights.

    python scripts/elbow_curves.py --dataset bernholdt --kappa 1 10
"""

import argparse

import numpy as np

from moegp.clustering import ClusterConfig, build_joint_features, elbow_select_L, kmeans
from moegp.datasets import GENERATORS


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dataset", choices=sorted(GENERATORS), default="higdon")
    ap.add_argument("--n", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--kappa", type=float, nargs="+", default=[0.5, 1.0, 10.0])
    ap.add_argument("--max-L", type=int, default=6)
    args = ap.parse_args()
    ds = GENERATORS[args.dataset](args.n, args.seed)
    Ls = list(range(1, args.max_L + 1))
    for kappa in args.kappa:
        cfg = ClusterConfig(output_weight=kappa, seed=args.seed)
        P = build_joint_features(ds.X, ds.y, cfg)
        inertia = np.array([kmeans(P, L, cfg)[2] for L in Ls])
        rel = " ".join(f"{v:.3f}" for v in inertia / inertia[0])
        print(f"kappa={kappa:<6g} relative inertia L=1..{args.max_L}: {rel}  "
              f"-> elbow L={elbow_select_L(ds.X, ds.y, Ls, cfg)}")


if __name__ == "__main__":
    main()
