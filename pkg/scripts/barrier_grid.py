"""Barrier-event grid sweep with the fitted ratio constants.

Writes every grid record (JSONL) and prints the base/refined constants.

    python scripts/barrier_grid.py --horizons 16 --replicas 1000000
"""

import argparse
import json
import sys

from gwbarrier.cli import dumps_record
from gwbarrier.experiments import BarrierGridConfig, run_barrier_grid, summarize_grid


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--horizons", type=int, nargs="+", default=[16, 32, 64])
    p.add_argument("--replicas", type=int, default=10 ** 5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--tolerance", type=float, default=0.2, help="allowed refinement change")
    p.add_argument("--out", default="barrier_grid.jsonl")
    args = p.parse_args()
    cfg = BarrierGridConfig(horizons=tuple(args.horizons))
    progress = lambda L, k, t: print(f"L={L} k={k}: {t:.1f}s", file=sys.stderr)
    records = run_barrier_grid(cfg, args.replicas, args.seed, args.workers, progress)
    with open(args.out, "w") as fh:
        for r in records:
            fh.write(dumps_record(r) + "\n")
    summary = summarize_grid(records, args.tolerance)
    print(json.dumps(summary, indent=2))
    return 0 if summary["passed"] else 1


if __name__ == "__main__":
    sys.exit(main())
