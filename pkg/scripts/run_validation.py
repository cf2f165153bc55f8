"""Run the acceptance suite and write one JSONL record per criterion.

    python scripts/run_validation.py --quick --out validation.jsonl
    python scripts/run_validation.py --only 1 2 6
"""

import argparse
import sys

from gwbarrier.cli import dumps_record
from gwbarrier.validation import run_suite


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--quick", action="store_true", help="quick barrier grid (criterion 7)")
    p.add_argument("--only", type=int, nargs="*", help="criterion numbers to run")
    p.add_argument("--out", default="validation.jsonl")
    args = p.parse_args()
    results = run_suite(args.seed, args.workers, quick=args.quick, numbers=args.only)
    with open(args.out, "w") as fh:
        for r in results:
            fh.write(dumps_record(r.to_record()) + "\n")
    return 0 if all(r.passed for r in results) else 1


if __name__ == "__main__":
    sys.exit(main())
