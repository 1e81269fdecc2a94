"""Analytic choice probabilities against trajectory simulation on random tasks.

Usage: python3 scripts/oracle_validation.py [--cases 50] [--draws 1000000] [--seed 0] [--workers 1]
"""
import argparse
import sys
import time

from physiodft.simulate import validate_oracle


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--cases", type=int, default=50)
    p.add_argument("--draws", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    args = p.parse_args()
    t0 = time.perf_counter()
    cases = validate_oracle(args.cases, args.draws, seed=args.seed, workers=args.workers)
    print(f"{'case':>4} {'J':>2} {'K':>2} {'tau':>4} {'max z':>8}  result")
    for c in cases:
        print(f"{c.index:>4} {c.n_alternatives:>2} {c.n_attributes:>2} {c.tau:>4} {c.max_z:>8.2f}  {'pass' if c.passed else 'FAIL'}")
    passes = sum(c.passed for c in cases)
    need = -(-96 * args.cases // 100)
    print(f"passed {passes}/{args.cases} (need {need}) in {time.perf_counter() - t0:.0f} s")
    return 0 if passes >= need else 1


if __name__ == "__main__":
    sys.exit(main())
