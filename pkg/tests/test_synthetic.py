import numpy as np
import pytest

from duracd.acd import AcdParams, acd_recursion
from duracd.data import acf
from duracd.errors import DataError
from duracd.simulate import SimConfig, simulate_acd

P11 = AcdParams(omega=0.1, alphas=[0.2], betas=[0.7])


def test_iid_case_mean():
    params = AcdParams(omega=2.0, alphas=[0.0], betas=[0.0])
    series, mu = simulate_acd(SimConfig(params=params, n=100_000, seed=1))
    se = 2.0 / np.sqrt(100_000)
    assert abs(series.durations.mean() - 2.0) < 3 * se
    assert np.allclose(mu, 2.0)


def test_acd11_mean_near_unconditional():
    series, _ = simulate_acd(SimConfig(params=P11, n=100_000, seed=2))
    x = series.durations
    batches = x.reshape(10, -1).mean(axis=1)
    se = batches.std(ddof=1) / np.sqrt(10)
    assert abs(x.mean() - 1.0) < 3 * se


def test_same_seed_identical():
    a, mu_a = simulate_acd(SimConfig(params=P11, n=5000, seed=9))
    b, mu_b = simulate_acd(SimConfig(params=P11, n=5000, seed=9))
    assert np.array_equal(a.durations, b.durations)
    assert np.array_equal(mu_a, mu_b)


def test_different_seed_differs():
    a, _ = simulate_acd(SimConfig(params=P11, n=1000, seed=1))
    b, _ = simulate_acd(SimConfig(params=P11, n=1000, seed=2))
    assert not np.array_equal(a.durations, b.durations)


def test_strictly_positive():
    series, mu = simulate_acd(SimConfig(params=P11, n=50_000, seed=3))
    assert np.all(series.durations > 0)
    assert np.all(mu > 0)


def test_latent_path_replays_bitwise():
    # with no burn-in the recursion replay must reproduce mu exactly
    series, mu = simulate_acd(SimConfig(params=P11, n=3000, burn_in=0, seed=4))
    replay = acd_recursion(P11, series.durations, P11.unconditional_mean())
    assert np.array_equal(mu, replay)


def test_burn_in_discards():
    full, _ = simulate_acd(SimConfig(params=P11, n=1500, burn_in=0, seed=5))
    tail, _ = simulate_acd(SimConfig(params=P11, n=500, burn_in=1000, seed=5))
    assert np.array_equal(full.durations[1000:], tail.durations)


def test_slow_acf_decay_for_persistent_process():
    series, _ = simulate_acd(SimConfig(params=P11, n=50_000, seed=6))
    rho = acf(series.durations, 20)
    assert rho[1] > 0
    assert rho[1] > rho[20]


def test_features_synthesis():
    config = SimConfig(params=P11, n=2000, seed=7, with_features=True)
    series, _ = simulate_acd(config)
    assert series.features.shape == (2000, 3)
    assert np.array_equal(series.features[:, 0], series.durations)
    assert np.all(series.features[:, 1] > 0)  # lognormal volume
    assert set(np.unique(series.features[:, 2])) == {-1.0, 1.0}
    # lognormal sanity: log volume roughly standard normal
    logv = np.log(series.features[:, 1])
    assert abs(logv.mean()) < 0.1 and abs(logv.std() - 1.0) < 0.1


def test_nonstationary_rejected():
    bad = AcdParams(omega=0.1, alphas=[0.5], betas=[0.6])
    with pytest.raises(DataError, match="persistence"):
        simulate_acd(SimConfig(params=bad, n=100))


def test_bad_n_rejected():
    with pytest.raises(DataError):
        simulate_acd(SimConfig(params=P11, n=0))
