"""Covering-threshold tails from the branching sampler across depths.

For each L, sets sqrt(2n) = kappa_L L + x (right tail, P(not covered)) or
kappa_L L - x (left tail, P(covered)) and fits the envelopes.

    python scripts/tail_sweep.py --depths 10 12 14 16 --replicas 200000
"""

import argparse
import math

import numpy as np

from gwbarrier.stats import bernoulli_estimate, fit_envelope
from gwbarrier.tree import cover_probability_table, kappa, ray_knight_cover_counts


def sweep(L, xs, sign, replicas, seed, workers, table, exact_depth):
    rows = []
    for i, x in enumerate(xs):
        n = int(round((kappa(L) * L + sign * x) ** 2 / 2))
        succ, trials = ray_knight_cover_counts(L, n, replicas, seed, workers,
                                               exact_depth=min(exact_depth, L), table=table,
                                               stream_offset=(L * 100 + i + 50 * (sign < 0)) << 20)
        p = trials - succ if sign > 0 else succ
        est = bernoulli_estimate(p, trials)
        rows.append((x, sign * (math.sqrt(2 * n) - kappa(L) * L), n, est))
    return rows


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--depths", type=int, nargs="+", default=[10, 12, 14, 16])
    p.add_argument("--replicas", type=int, default=10 ** 5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--exact-depth", type=int, default=10)
    args = p.parse_args()
    table = cover_probability_table(args.exact_depth)
    right_x = [1.0 + 0.5 * i for i in range(7)]
    left_x = [float(i) for i in range(7)]
    for L in args.depths:
        print(f"L={L}  kappa={kappa(L):.5f}")
        right = sweep(L, right_x, +1, args.replicas, args.seed, args.workers, table,
                      args.exact_depth)
        for x, xe, n, est in right:
            print(f"  right x={x:4.1f} x_eff={xe:6.3f} n={n:6d} P(uncovered)={est.point:.3e}"
                  f" +- {est.stderr:.1e}")
        xe = np.array([r[1] for r in right])
        prob = np.array([r[3].point for r in right])
        ok = prob > 0
        if ok.sum() >= 3:
            fit = fit_envelope(xe[ok], prob[ok], "x_exp_decay",
                               stderr=[r[3].stderr for r, k in zip(right, ok) if k])
            print(f"  slope of ln(p/x): {fit.slope:.4f} +- {fit.slope_stderr:.4f}"
                  f"  (target {-math.sqrt(2 * math.log(2)):.4f}), c_hat={fit.constant:.3f}")
        left = sweep(L, left_x, -1, args.replicas, args.seed, args.workers, table,
                     args.exact_depth)
        for x, xe, n, est in left:
            print(f"  left  x={x:4.1f} x_eff={xe:6.3f} n={n:6d} P(covered)={est.point:.3e}"
                  f" +- {est.stderr:.1e}")


if __name__ == "__main__":
    main()
