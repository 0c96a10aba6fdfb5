"""Poisson analysis at K=1600, nbar=160, M=16 with the asymptotic design; prints timings."""

import argparse
import time

from batsflan import BatsModel
from batsflan.degree_opt import OptConfig, optimize_asymptotic
from batsflan.inactivation import expected_inactivations_poisson
from batsflan.poisson import poisson_stopping_time

RANKD = [0, 0, 0, 0, 0, 0, 0.0004, 0.0025, 0.0110, 0.0387, 0.1040, 0.2062,
         0.2797, 0.2339, 0.1038, 0.0190, 0.0008]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--K", type=int, default=1600)
    ap.add_argument("--nbar", type=float, default=160.0)
    ap.add_argument("--eta", type=float, default=0.04)
    ap.add_argument("--tol", type=float, default=1e-10)
    args = ap.parse_args()

    base = BatsModel.create(K=args.K, M=16, q=256, rank_dist=RANKD, degree_dist=[1.0])
    t0 = time.perf_counter()
    res = optimize_asymptotic(base, OptConfig(eta=args.eta))
    model = base.with_degree(res.psi.psi, K=args.K)
    print(f"design: theta {res.theta_hat:.4f}, {time.perf_counter() - t0:.1f} s")

    t0 = time.perf_counter()
    dist = poisson_stopping_time(model, args.nbar, args.tol)
    t1 = time.perf_counter()
    inact = expected_inactivations_poisson(model, args.nbar, args.tol)
    t2 = time.perf_counter()
    kprime = int(round((1 - args.eta) * args.K))
    print(f"stopping time: {t1 - t0:.1f} s, p_error(K') = {dist.error_probability(kprime):.6g}, "
          f"p_error(K) = {dist.error_probability(args.K):.6g}, mean {dist.mean():.2f}")
    print(f"inactivations: {t2 - t1:.1f} s, expected {inact.expected:.4f}")
    if dist.flags or inact.flags:
        print("flags:", sorted(set(dist.flags) | set(inact.flags)))


if __name__ == "__main__":
    main()
