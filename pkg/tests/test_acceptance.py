"""End-to-end acceptance checks; each test records one pass/fail line."""

import math
import time

import numpy as np
import pytest

from batsflan import BatsModel
from batsflan.bp import stopping_time
from batsflan.degree_opt import OptConfig, design_metrics, optimize_asymptotic, optimize_heuristic
from batsflan.inactivation import (
    expected_inactivations_fixed,
    expected_inactivations_mixture,
    expected_inactivations_poisson,
)
from batsflan.karp import karp_poly_stopping_time, karp_stopping_time
from batsflan.poisson import poisson_stopping_time, poisson_weights
from batsflan.simulator import monte_carlo

from conftest import RANKD, REF_H, REF_PSI, random_model

PUBLISHED_OVERHEAD = [0.0125, 0.0758, 0.1391, 0.2024, 0.2656]


def rankd_model(K=196):
    return BatsModel.create(K=K, M=16, q=256, rank_dist=RANKD, degree_dist=[1.0])


def test_capacity(criterion):
    start = time.perf_counter()
    C = rankd_model().capacity()
    wall = time.perf_counter() - start
    ok = abs(C - 0.7442) <= 5e-4 and wall < 1.0
    assert criterion(1, "capacity", ok, f"C = {C:.10f}, {wall:.3f} s")


def test_design_overhead(criterion):
    start = time.perf_counter()
    model = rankd_model()
    cells = [(196, range(16, 21)), (392, range(32, 41, 2)), (784, range(64, 81, 4))]
    worst = 0.0
    for K, ns in cells:
        got = [design_metrics(model, K, n, 0.04).overhead for n in ns]
        worst = max(worst, float(np.max(np.abs(np.array(got) - PUBLISHED_OVERHEAD))))
    wall = time.perf_counter() - start
    ok = worst <= 1e-4 and wall < 1.0
    assert criterion(2, "design overhead", ok, f"max deviation {worst:.2e} with the computed capacity, {wall:.3f} s")


def test_stopping_time_normalization(criterion):
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(50):
        model = random_model(rng, K_max=64, M_max=4, q=16)
        n = int(rng.integers(0, 17))
        worst = max(worst, abs(math.fsum(stopping_time(model, n).pmf) - 1.0))
    wall = time.perf_counter() - start
    ok = worst <= 1e-9 and wall < 120
    assert criterion(3, "stopping-time normalization", ok, f"max |sum - 1| = {worst:.2e}, {wall:.1f} s")


@pytest.fixture(scope="module")
def reference_run():
    model = BatsModel.create(K=32, M=4, q=16, rank_dist=REF_H, degree_dist=REF_PSI)
    start = time.perf_counter()
    mc = monte_carlo(model, 100_000, seed=2024, n=10)
    return model, mc, time.perf_counter() - start


def test_bp_against_simulation(criterion, reference_run):
    model, mc, sim_wall = reference_run
    start = time.perf_counter()
    cdf = stopping_time(model, 10).cdf
    lo, hi = mc.stop_cdf_band(3.0)
    outside = np.flatnonzero((cdf < lo - 1e-12) | (cdf > hi + 1e-12))
    wall = sim_wall + time.perf_counter() - start
    ok = outside.size == 0 and wall < 300
    assert criterion(4, "BP analysis vs simulation", ok, f"{outside.size} points outside the band, {wall:.1f} s")


def test_inactivation_against_simulation(criterion, reference_run):
    model, mc, sim_wall = reference_run
    start = time.perf_counter()
    res = expected_inactivations_fixed(model, 10)
    z = abs(res.expected - mc.mean_inactivations) / mc.sem_inactivations
    wall = sim_wall + time.perf_counter() - start
    ok = z <= 3.0 and res.mass_error <= 1e-9 and wall < 300
    assert criterion(
        5, "inactivation analysis vs simulation", ok,
        f"analytic {res.expected:.4f}, empirical {mc.mean_inactivations:.4f} ({z:.2f} sigma), "
        f"mass error {res.mass_error:.1e}, {wall:.1f} s",
    )


def test_poisson_fixed_consistency(criterion):
    rng = np.random.default_rng(6)
    start = time.perf_counter()
    cdf_gap = inact_gap = 0.0
    for _ in range(8):
        model = random_model(rng, K_max=24, M_max=2, K_min=4)
        nbar = float(rng.uniform(1, 8))
        ns, w, tail = poisson_weights(nbar, 1e-12)
        assert tail <= 1e-12
        mix = sum(wi * stopping_time(model, int(n)).cdf for n, wi in zip(ns, w))
        cdf_gap = max(cdf_gap, float(np.max(np.abs(poisson_stopping_time(model, nbar).cdf - mix))))
        inact_gap = max(inact_gap, abs(expected_inactivations_poisson(model, nbar).expected
                                       - expected_inactivations_mixture(model, nbar)))
    wall = time.perf_counter() - start
    ok = cdf_gap <= 1e-6 and inact_gap <= 1e-5 and wall < 120
    assert criterion(6, "Poisson vs fixed mixture", ok, f"CDF gap {cdf_gap:.1e}, inactivation gap {inact_gap:.1e}, {wall:.1f} s")


def test_degree_tracking_oracle(criterion):
    rng = np.random.default_rng(7)
    start = time.perf_counter()
    table_gap = poly_gap = 0.0
    for M, K_max, n_max in [(1, 24, 8), (2, 12, 6)]:
        for _ in range(15):
            model = random_model(rng, K_max=K_max, M_max=M, K_min=M)
            if model.M != M:
                continue
            n = int(rng.integers(0, n_max + 1))
            karp = karp_stopping_time(model, n).pmf
            table_gap = max(table_gap, float(np.max(np.abs(karp - stopping_time(model, n).pmf))))
            if M == 1:
                poly_gap = max(poly_gap, float(np.max(np.abs(karp_poly_stopping_time(model, n).pmf - karp))))
    wall = time.perf_counter() - start
    ok = table_gap <= 1e-8 and poly_gap <= 1e-12 and wall < 120
    assert criterion(7, "degree-tracking oracle", ok, f"table gap {table_gap:.1e}, polynomial gap {poly_gap:.1e}, {wall:.1f} s")


def test_optimizer_soundness(criterion):
    model = rankd_model()
    start = time.perf_counter()
    res = optimize_asymptotic(model, OptConfig(eta=0.04))
    zero_c = optimize_heuristic(model, OptConfig(eta=0.04, cp_heur=0.5), K=196)
    wall = time.perf_counter() - start
    bound = model.capacity() * model.M
    ok = (
        (1 - 0.04) * res.theta_hat <= bound + 1e-6
        and res.feasible and res.max_violation <= 1e-6
        and abs(zero_c.theta_hat - res.theta_hat) <= 1e-8
        and wall < 30
    )
    assert criterion(
        8, "optimizer soundness", ok,
        f"(1-eta) theta = {(1 - 0.04) * res.theta_hat:.4f} <= {bound:.4f}, violation {res.max_violation:.1e}, {wall:.1f} s",
    )


def test_finite_length_design(criterion):
    K, eta, n = 64, 0.04, 8
    base = rankd_model(K)
    start = time.perf_counter()
    asym = optimize_asymptotic(base, OptConfig(eta=eta))
    ref = expected_inactivations_fixed(base.with_degree(asym.psi.psi, K=K), n).expected
    scores = {}
    for c, cp in [(1.0, 0.5), (15.0, 0.5), (30.0, 0.25)]:
        heur = optimize_heuristic(base, OptConfig(eta=eta, c_heur=c, cp_heur=cp), K)
        scores[(c, cp)] = expected_inactivations_fixed(base.with_degree(heur.psi.psi, K=K), n).expected
    wall = time.perf_counter() - start
    best = min(scores, key=scores.get)
    ok = scores[best] < ref and wall < 600
    assert criterion(
        9, "finite-length design", ok,
        f"asymptotic {ref:.3f} vs best heuristic c={best[0]:g}, c'={best[1]:g}: {scores[best]:.3f} inactivations at n={n}, {wall:.1f} s",
    )


@pytest.mark.slow
def test_performance_budget(criterion):
    base = rankd_model(1600)
    psi = optimize_asymptotic(base, OptConfig(eta=0.04)).psi.psi
    model = base.with_degree(psi, K=1600)
    start = time.perf_counter()
    dist = poisson_stopping_time(model, 160.0, 1e-10)
    inact = expected_inactivations_poisson(model, 160.0, 1e-10)
    wall = time.perf_counter() - start
    ok = wall < 600 and abs(math.fsum(dist.pmf) - 1) < 1e-8
    assert criterion(
        10, "performance budget", ok,
        f"p_error(K) = {dist.error_probability(1600):.6f}, mean stop {dist.mean():.2f}, "
        f"expected inactivations {inact.expected:.3f}, {wall:.1f} s",
    )
