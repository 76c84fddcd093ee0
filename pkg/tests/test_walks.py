import math

import numpy as np
import pytest

import oracles
from arwlab import walks


def test_one_dimensional_radius_one_never_returns():
    for seed in range(50):
        s = walks.simulate_returns(1, seed, escape_radius=1)
        assert s == walks.ReturnsSample(0, 1, True)


def test_simulate_reproducible():
    assert walks.simulate_returns(3, 7, 50) == walks.simulate_returns(3, 7, 50)
    data = walks.sample_returns(3, 200, 30, master_seed=5)
    assert np.array_equal(data, walks.sample_returns(3, 200, 30, master_seed=5))


def test_worker_count_does_not_change_sample():
    a = walks.sample_returns(4, 3000, 20, master_seed=9, workers=1)
    b = walks.sample_returns(4, 3000, 20, master_seed=9, workers=3)
    assert np.array_equal(a, b)


def test_returns_monotone_in_radius():
    # same walk, larger radius: the path is a prefix-extension, returns cannot drop
    for seed in range(100):
        counts = [walks.simulate_returns(3, seed, r).returns for r in (5, 10, 20, 40)]
        assert counts == sorted(counts)


@pytest.mark.parametrize("d", sorted(oracles.EXPECTED_RETURNS))
def test_frozen_oracle_values(d):
    assert oracles.expected_returns_green(d) == pytest.approx(oracles.EXPECTED_RETURNS[d], abs=1e-9)


def test_green_function_known_value_d3():
    # Watson's integral: G(0) = 1.516386059...
    assert oracles.EXPECTED_RETURNS[3] + 1 == pytest.approx(1.5163860591519780, abs=1e-10)


def test_d3_estimate_matches_oracle():
    est = walks.expected_returns(3, 100_000, escape_radius=100, master_seed=1)
    assert est.censoring_rate == 0 and not est.divergent
    # radius-100 truncation bias is about -0.004
    assert abs(est.mean - oracles.EXPECTED_RETURNS[3]) < 4 * est.std_error + 0.006


@pytest.mark.parametrize("d", [4, 6, 10])
def test_higher_dimensions_match_oracle(d):
    est = walks.expected_returns(d, 100_000, escape_radius=30, master_seed=d)
    assert abs(est.mean - oracles.EXPECTED_RETURNS[d]) < 4 * est.std_error + 0.003


def test_return_count_is_geometric():
    # P(R >= k+1 | R >= k) is the constant return probability
    d = 4
    data = walks.sample_returns(d, 100_000, 30, master_seed=3)[:, 0]
    q = oracles.EXPECTED_RETURNS[d] / (1 + oracles.EXPECTED_RETURNS[d])
    for k in range(2):
        at_least = np.sum(data >= k)
        ratio = np.sum(data >= k + 1) / at_least
        assert abs(ratio - q) < 4 * math.sqrt(q * (1 - q) / at_least) + 0.003


@pytest.mark.parametrize("d", [1, 2])
def test_recurrent_dimensions_flagged_divergent(d):
    est = walks.expected_returns(d, 200, escape_radius=50)
    assert est.divergent and est.mean == math.inf
    assert est.truncated_mean > 0
    assert est.to_dict()["mean"] is None


def test_truncated_mean_grows_in_one_dimension():
    small = walks.expected_returns(1, 2000, escape_radius=10).truncated_mean
    large = walks.expected_returns(1, 2000, escape_radius=100).truncated_mean
    assert large > 3 * small


def test_censoring_raises():
    with pytest.raises(walks.CensoringError):
        walks.expected_returns(3, 100, escape_radius=10**6, max_steps=10)
    est = walks.expected_returns(3, 100, escape_radius=10**6, max_steps=10, allow_censored=True)
    assert est.censoring_rate == 1.0 and est.divergent


def test_input_validation():
    with pytest.raises(ValueError):
        walks.expected_returns(0, 10)
    with pytest.raises(ValueError):
        walks.expected_returns(3, 0)
    with pytest.raises(ValueError):
        walks.simulate_returns(3, 0, escape_radius=0)


@pytest.mark.parametrize("d,value", [(1, 0.5), (3, 1 / 6), (10, 0.05)])
def test_asymptotic(d, value):
    assert walks.returns_asymptotic(d) == pytest.approx(value)


def test_asymptotic_ratio_tends_to_one_slowly():
    ratios = [2 * d * oracles.EXPECTED_RETURNS[d] for d in range(6, 11)]
    assert ratios == sorted(ratios, reverse=True)
    assert all(r > 1.15 for r in ratios)
