"""Analysis versus Monte Carlo on the K=32, M=4, q=16 reference configuration."""

import argparse
import time

import numpy as np

from batsflan import BatsModel
from batsflan.cli import compare

REF_H = [0.0, 0.05, 0.15, 0.3, 0.5]
REF_PSI = [0.0, 0.1, 0.3, 0.3, 0.0, 0.2, 0.0, 0.0, 0.0, 0.0, 0.0, 0.1]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=10)
    ap.add_argument("--poisson", action="store_true", help="treat --n as a Poisson mean")
    ap.add_argument("--trials", type=int, default=20_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    model = BatsModel.create(K=32, M=4, q=16, rank_dist=REF_H, degree_dist=REF_PSI)
    kw = {"nbar": float(args.n)} if args.poisson else {"n": args.n}
    t0 = time.perf_counter()
    rep = compare(model, trials=args.trials, seed=args.seed, workers=args.workers, **kw)
    print(f"{args.trials} trials in {time.perf_counter() - t0:.1f} s")
    print(" t  analytic  empirical   band")
    for t, (a, e, lo, hi) in enumerate(zip(rep["cdf"], rep["empirical"], rep["lower"], rep["upper"])):
        mark = "" if rep["inside"][t] else "  <- outside"
        print(f"{t:2d}  {a:.5f}   {e:.5f}   [{lo:.5f}, {hi:.5f}]{mark}")
    print(f"expected inactivations {rep['expected_inactivations']:.4f}, "
          f"empirical {rep['mean_inactivations']:.4f} +- {rep['sem_inactivations']:.4f}")
    print("pass" if rep["cdf_pass"] and rep["inact_pass"] else "FAIL")
    return 0 if rep["cdf_pass"] and rep["inact_pass"] else 1


if __name__ == "__main__":
    raise SystemExit(main())
