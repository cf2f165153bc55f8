"""Mean number of barrier-surviving leaves against 2^k (1 + x) exp(-kappa x).

    python scripts/survivor_scaling.py --depths 10 12 14 --samples 3000
"""

import argparse
import math

import numpy as np

from gwbarrier.rng import rng_stream
from gwbarrier.tree import count_barrier_survivors, kappa


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--depths", type=int, nargs="+", default=[10, 12, 14])
    p.add_argument("--level", type=int, default=0, help="top level k of the subtree")
    p.add_argument("--xs", type=float, nargs="+", default=[1.0, 2.0, 3.0])
    p.add_argument("--samples", type=int, default=3000)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    k = args.level
    for L in args.depths:
        depth = L - k
        kb = kappa(depth)
        for j, x in enumerate(args.xs):
            m = int(round((kb * depth + x) ** 2 / 2))
            xe = math.sqrt(2 * m) - kb * depth
            rng = rng_stream(args.seed, (L << 8) + j)
            counts = np.array([count_barrier_survivors(L, k, m, rng, "walk")
                               for _ in range(args.samples)])
            scale = 2 ** k * (1 + xe) * math.exp(-kb * xe)
            se = counts.std() / math.sqrt(counts.size)
            print(f"L={L:3d} x={x:4.1f} m={m:5d} E[N]={counts.mean():.4f} +- {se:.4f}"
                  f"  ratio={counts.mean() / scale:.3f}")


if __name__ == "__main__":
    main()
