"""Quartiles of the centred cover-time statistic from direct walks.

    python scripts/cover_tightness.py --depths 8 10 12 14 --samples 1000
"""

import argparse

import numpy as np

from gwbarrier.tree import cover_samples, cover_statistic


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--depths", type=int, nargs="+", default=[8, 10, 12, 14])
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    args = p.parse_args()
    print(f"{'L':>3} {'q25':>8} {'median':>8} {'q75':>8} {'iqr':>6} {'excursions':>11}")
    for i, L in enumerate(args.depths):
        rows = cover_samples(L, args.samples, args.seed, args.workers, stream_offset=i << 20)
        q1, med, q3 = np.percentile(cover_statistic(rows[:, 0], L), [25, 50, 75])
        print(f"{L:3d} {q1:8.3f} {med:8.3f} {q3:8.3f} {q3 - q1:6.3f} "
              f"{np.median(rows[:, 1]):11.0f}")


if __name__ == "__main__":
    main()
