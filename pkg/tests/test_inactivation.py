import numpy as np
import pytest
from hypothesis import given, settings

from batsflan import BatsModel
from batsflan.bp import bp_error_probability, initial_state
from batsflan.inactivation import (
    expected_inactivations_fixed,
    expected_inactivations_mixture,
    expected_inactivations_poisson,
    fold,
    inact_step_fixed,
)

from conftest import models, random_model


def test_fold_merges_first_entry():
    assert np.array_equal(fold(np.array([0.2, 0.3, 0.5])), [0.5, 0.5])
    assert np.allclose(fold(np.array([[0.1, 0.2], [0.3, 0.4]])), [[0.3], [0.7]])


@given(models(K_max=14))
@settings(max_examples=15)
def test_fixed_mass_conserved(model):
    state = initial_state(model, 5)
    for _ in range(model.K - 1):
        state = inact_step_fixed(model, state)
        assert abs(state.mass - 1) < 1e-12
        assert np.all(state.lam >= -1e-15)


@given(models(K_max=14))
@settings(max_examples=15)
def test_poisson_mass_conserved(model):
    res = expected_inactivations_poisson(model, 4.0)
    assert res.mass_error < 1e-8
    assert not res.flags or not any(f.startswith("degenerate") for f in res.flags)


def test_useless_batches_inactivate_every_symbol():
    model = BatsModel.create(K=9, M=1, q=2, rank_dist=[1.0, 0.0], degree_dist=[1.0], lt_mode=True)
    assert expected_inactivations_fixed(model, 6).expected == pytest.approx(9.0, abs=1e-12)
    assert expected_inactivations_poisson(model, 6.0).expected == pytest.approx(9.0, abs=1e-10)


def test_no_batches_inactivate_every_symbol():
    rng = np.random.default_rng(0)
    model = random_model(rng, K_min=5)
    assert expected_inactivations_fixed(model, 0).expected == pytest.approx(model.K, abs=1e-12)
    assert expected_inactivations_poisson(model, 0.0).expected == pytest.approx(model.K, abs=1e-12)


def test_coupon_collector_inactivations():
    # degree-1 full-rank batches: every symbol missing from the sample is inactivated
    K, n = 10, 12
    model = BatsModel.create(K=K, M=1, q=2, rank_dist=[0, 1], degree_dist=[1.0], lt_mode=True)
    missing = K * (1 - 1 / K) ** n
    # an empty ripple at t = 0 also means one inactivation; it does not double count
    assert expected_inactivations_fixed(model, n).expected == pytest.approx(missing, abs=1e-12)


@given(models(K_max=16))
@settings(max_examples=20)
def test_bounds(model):
    for n in (0, 3, 8):
        res = expected_inactivations_fixed(model, n)
        assert -1e-12 <= res.expected <= model.K + 1e-9
        # the first inactivation happens exactly when BP fails
        assert res.expected >= bp_error_probability(model, n, model.K) - 1e-9


def test_decreasing_in_n():
    rng = np.random.default_rng(4)
    for _ in range(6):
        model = random_model(rng, K_max=16, M_max=3, K_min=6)
        vals = [expected_inactivations_fixed(model, n).expected for n in range(0, 30, 3)]
        assert all(b <= a + 1e-9 for a, b in zip(vals, vals[1:]))


@pytest.mark.parametrize("seed", [0, 1])
def test_poisson_matches_mixture(seed):
    rng = np.random.default_rng(50 + seed)
    model = random_model(rng, K_max=16, M_max=2, K_min=8)
    nbar = float(rng.uniform(3, 10))
    assert expected_inactivations_poisson(model, nbar).expected == pytest.approx(
        expected_inactivations_mixture(model, nbar), abs=1e-5
    )


def test_poisson_exceeds_fixed():
    psi = np.zeros(20)
    psi[[1, 2, 4, 9, 19]] = [0.2, 0.3, 0.2, 0.2, 0.1]
    model = BatsModel.create(K=64, M=4, q=16, rank_dist=[0.0, 0.05, 0.15, 0.3, 0.5], degree_dist=psi)
    for n in (16, 32, 64):
        assert expected_inactivations_poisson(model, float(n)).expected > expected_inactivations_fixed(model, n).expected
