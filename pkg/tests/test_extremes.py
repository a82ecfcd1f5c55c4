import logging
import math

import numpy as np
import pytest
from scipy import stats

from evlab.extremes import (cluster_histogram, cluster_sizes, compound_poisson_pmf, dispersion_index,
                            dp_prime_stat, dprime_stat, ei_estimate, evl_estimate, ks_exponential,
                            palm_gaps, polya_aeppli_pmf, polya_aeppli_pmf_array, repp, total_variation,
                            window_counts)
from evlab.maps import NoiseModel, doubling
from evlab.stochastic import (ExceedanceBatch, MeasureModel, Observable, ProcessSample, ThresholdSchedule,
                              simulate, threshold_for)


def iid_batch(tau, n, trials, seed):
    """Exceedance times of iid uniforms against the ball of mass tau/n at 0."""
    sched = threshold_for(MeasureModel(), Observable(0.0), tau, n)
    rng = np.random.default_rng(seed)
    times, maxima = [], np.empty(trials)
    for i in range(trials):
        x = rng.random(n)
        v = -np.minimum(x, 1 - x)
        times.append(np.flatnonzero(v > sched.u))
        maxima[i] = v.max()
    return ExceedanceBatch(sched, times, maxima, np.zeros(trials))


def test_evl_iid_surrogate():
    b = iid_batch(1.0, 1000, 4000, 0)
    est = evl_estimate(b)
    assert abs(est.p_hat - math.exp(-1)) <= 3 * est.se + 1e-3


def test_ei_iid_surrogate_is_one():
    b = iid_batch(2.0, 2000, 3000, 1)
    est = ei_estimate(b, b.sched, p=3)
    for name, (v, se) in est.values().items():
        assert abs(v - 1) <= 4 * se + 0.01, name


def test_ei_fixed_point_is_half():
    obs = Observable(0.0)
    sched = threshold_for(MeasureModel(), obs, 2.0, 5000)
    b = simulate(doubling(), None, obs, sched, trials=3000, seed=3)
    est = ei_estimate(b, sched, p=1)
    assert est.theta_annulus == pytest.approx(0.5, abs=0.04)
    assert est.theta_logratio == pytest.approx(0.5, abs=0.04)


def test_ei_clamps_with_log(caplog):
    sched = ThresholdSchedule(1.0, 10, -0.1, 0.1, 0.1)
    samples = [ProcessSample(10, -0.1, np.arange(10), 0.0) for _ in range(3)]
    with caplog.at_level(logging.WARNING, logger="evlab.extremes"):
        est = ei_estimate(samples, sched)
    assert "logratio" in est.clamped
    assert "clamped" in caplog.text


def test_repp_counts():
    s = ProcessSample(10, -0.1, np.array([3, 5]), 0.0)
    sched = ThresholdSchedule(1.0, 10, -0.1, 0.1, 0.1)
    r = repp(s, sched, [(0, 1), (0.6, 1), [(0, 0.4), (0.5, 0.6)]])
    assert r.counts == (2, 0, 2)
    assert np.allclose(r.times, [0.3, 0.5])
    with pytest.raises(ValueError):
        repp(s, sched, [(0, 2)])


def test_cluster_sizes_and_histogram():
    t = np.array([4, 5, 6, 90])
    assert cluster_sizes(t, 2).tolist() == [3, 1]
    s = ProcessSample(100, 0.0, t, 0.0)
    h = cluster_histogram([s], q=2)
    assert h.pi_hat == {1: 0.5, 3: 0.5} and h.clusters == 2
    h0 = cluster_histogram([s], q=0)
    assert h0.pi_hat == {1: 1.0}
    assert h.mean_size() == 2.0
    with pytest.raises(ValueError):
        cluster_histogram([s], q=-1)


def test_polya_aeppli_values():
    assert polya_aeppli_pmf(0.5, 2.0, 0) == pytest.approx(math.exp(-1))
    for k in range(6):
        assert polya_aeppli_pmf(1.0, 1.5, k) == pytest.approx(stats.poisson.pmf(k, 1.5))
    # one cluster of size one: e^{-theta t} * theta t * theta
    assert polya_aeppli_pmf(0.5, 1.0, 1) == pytest.approx(0.5 * 0.5 * math.exp(-0.5))
    assert polya_aeppli_pmf(0.5, 1.0, 1) == pytest.approx(0.15163, abs=1e-5)
    assert polya_aeppli_pmf_array(0.3, 5.0, 200).sum() == pytest.approx(1.0, abs=1e-10)


def test_polya_aeppli_mean():
    pmf = polya_aeppli_pmf_array(0.4, 3.0, 300)
    assert (np.arange(301) * pmf).sum() == pytest.approx(3.0, abs=1e-8)


def test_polya_aeppli_validation():
    with pytest.raises(ValueError):
        polya_aeppli_pmf(0.0, 1.0, 1)
    with pytest.raises(ValueError):
        polya_aeppli_pmf(0.5, -1.0, 1)
    with pytest.raises(ValueError):
        polya_aeppli_pmf(0.5, 1.0, -1)


def test_compound_poisson_reductions():
    for k in range(8):
        assert compound_poisson_pmf(1.0, {1: 1.0}, 2.0, k) == pytest.approx(stats.poisson.pmf(k, 2.0))
    theta = 0.3
    geo = [theta * (1 - theta) ** (j - 1) for j in range(1, 400)]
    geo[-1] += 1 - sum(geo)
    for k in range(10):
        assert compound_poisson_pmf(theta, geo, 4.0, k) == pytest.approx(polya_aeppli_pmf(theta, 4.0, k), rel=1e-10)


def test_compound_poisson_two_point():
    # multiplicities {1: 2/3, 2: 1/3}: P(N=2) = e^{-l}(l^2/2 (2/3)^2 + l/3)
    lam = 0.75 * 2.0
    expect = math.exp(-lam) * (lam ** 2 / 2 * (2 / 3) ** 2 + lam / 3)
    assert compound_poisson_pmf(0.75, {1: 2 / 3, 2: 1 / 3}, 2.0, 2) == pytest.approx(expect)
    with pytest.raises(ValueError):
        compound_poisson_pmf(0.5, {1: 0.5}, 1.0, 1)


def test_total_variation():
    assert total_variation([0.5, 0.5], [0.5, 0.5]) == 0
    assert total_variation([1.0], [0.0, 1.0]) == 1.0


def test_window_counts_and_palm_gaps():
    s = ProcessSample(20, 0.0, np.array([1, 2, 11, 19]), 0.0)
    assert window_counts([s], 10).tolist() == [2, 2]
    assert palm_gaps([s], 12).tolist() == [1, 9, 8]


def test_ks_and_dispersion_on_reference_samples():
    rng = np.random.default_rng(0)
    assert ks_exponential(rng.exponential(size=20000)) < 0.015
    assert dispersion_index(rng.poisson(3.0, 50000)) == pytest.approx(1.0, abs=0.03)


def test_dprime_small_for_noisy_generic_point():
    obs = Observable(0.3141)
    big = threshold_for(MeasureModel(), obs, 1.0, 2000)
    small = threshold_for(MeasureModel(), obs, 1.0, 8000)
    noise = NoiseModel(0.05)
    a = dprime_stat(simulate(doubling(), noise, obs, big, 1000, seed=1), big)
    b = dprime_stat(simulate(doubling(), noise, obs, small, 1000, seed=1), small)
    assert b.value < a.value + 2 * (a.se + b.se)
    assert b.value < 0.05


def test_dp_prime_at_fixed_point():
    obs = Observable(0.0)
    sched = threshold_for(MeasureModel(), obs, 1.0, 4000)
    b = simulate(doubling(), None, obs, sched, 1000, seed=2)
    # clusters at a fixed point sit at lag 1; removing them with p = 1 leaves little
    d1 = dp_prime_stat(b, sched, p=1)
    d0 = dprime_stat(b, sched)
    assert d0.value > 0.3
    assert d1.value < 0.1


def test_dp_prime_with_wrong_period_stays_large():
    obs = Observable(0.0)
    sched = threshold_for(MeasureModel(), obs, 1.0, 4000)
    b = simulate(doubling(), None, obs, sched, 1000, seed=2)
    # the lag-1 return survives an annulus built for period 2
    assert dp_prime_stat(b, sched, p=2).value > 0.15
