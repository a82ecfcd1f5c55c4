import math
from fractions import Fraction

import numpy as np
import pytest
from scipy import stats

from evlab.experiments import discontinuous_map
from evlab.hitting import (AMBIENT, IN_TARGET, Ball, duality_check, first_return_min, hitting_time,
                           hitting_times, hts_cdf, hts_from_rts, kac_mean, rts_cdf, short_return_bound,
                           short_return_prob)
from evlab.intervals import ball
from evlab.maps import NoiseModel, doubling
from evlab.stochastic import MeasureModel, Observable, sample_random, simulate, threshold_for

F = Fraction


def test_hitting_time_exact_examples():
    s = hitting_time(doubling(), None, F(1, 3), 0, Ball(F(1, 3), 0.1), 10)
    assert s.r == 2 and not s.censored
    assert s.scale == pytest.approx(5.0)
    full = hitting_time(doubling(), None, F(1, 3), 0, Ball(0, 0.5), 10)
    assert full.r == 1


def test_hitting_time_censoring_and_validation():
    s = hitting_time(doubling(), None, F(0), 0, Ball(F(1, 2), 0.01), 30)
    assert s.censored and s.r is None
    with pytest.raises(ValueError):
        hitting_time(doubling(), None, F(0), 0, Ball(0, 0.1), 0)


def test_hts_from_rts_examples():
    t = np.linspace(0, 5, 501)
    assert np.allclose(hts_from_rts(t, np.zeros_like(t)), t)
    # exponential returns give exponential hits
    G = hts_from_rts(t, 1 - np.exp(-t))
    assert np.max(np.abs(G - (1 - np.exp(-t)))) < 1e-4
    with pytest.raises(ValueError):
        hts_from_rts(t[1:], np.zeros(500))
    with pytest.raises(ValueError):
        hts_from_rts(t, np.linspace(1, 0, 501))


def test_hts_and_rts_on_noisy_generic_point():
    noise, V = NoiseModel(0.05), Ball(0.2718, 0.001)
    hb = hitting_times(doubling(), noise, V, 20000, seed=1, start=AMBIENT)
    rb = hitting_times(doubling(), noise, V, 20000, seed=2, start=IN_TARGET)
    t = np.linspace(0, 4, 41)
    H, R = hts_cdf(hb, t), rts_cdf(rb, t)
    assert np.max(np.abs(H.G - (1 - np.exp(-t)))) < 0.02
    assert np.max(np.abs(R.G - (1 - np.exp(-t)))) < 0.02
    assert np.max(np.abs(hts_from_rts(t, R.G) - H.G)) < 0.03
    m, se = kac_mean(rb)
    assert abs(m - 1) <= 3 * se + 0.01
    with pytest.raises(ValueError):
        rts_cdf(hb, t)


def test_rts_at_fixed_point_has_atom():
    # noiseless returns to a small ball at 0 come back at lag 1 half the time
    rb = hitting_times(doubling(), None, Ball(0.0, 0.001), 20000, seed=3, start=IN_TARGET)
    assert np.mean(rb.r == 1) == pytest.approx(0.5, abs=0.015)


def test_duality_on_batch_and_samples():
    obs = Observable(0.0)
    sched = threshold_for(MeasureModel(), obs, 1.0, 2000)
    noise = NoiseModel(0.05)
    b = simulate(doubling(), noise, obs, sched, 500, seed=5)
    rep = duality_check(b, sched, doubling(), noise)
    assert rep.all_agree and rep.conditioned_trials > 400
    samples = [sample_random(doubling(), noise, obs, [6, i], sched) for i in range(50)]
    assert duality_check(samples, sched).all_agree


def test_first_return_min():
    assert first_return_min(doubling(), ball(F(0), F(1, 100))).value == 1
    assert first_return_min(doubling(), ball(F(1, 3), F(1, 100))).value == 2
    assert first_return_min(doubling(), Ball(F(1, 7), F(1, 1000))).value == 3
    r = first_return_min(discontinuous_map(), ball(F(1, 10), F(1, 10**4)), horizon=5)
    assert r.lower_bound >= 1


def test_first_return_blowup_is_reported():
    r = first_return_min(doubling(), ball(F(1, 5) + F(1, 10**9), F(1, 10**12)), horizon=60, max_pieces=4)
    assert r.aborted or r.found


def test_short_return_without_noise_is_certain_at_fixed_point():
    obs = Observable(0.0)
    sched = threshold_for(MeasureModel(), obs, 1.0, 10**4)
    rep = short_return_prob(doubling(), None, 0.0, sched, trials=100)
    assert rep.p_hat == 1.0 and rep.bound == math.inf


def test_short_return_with_noise_is_within_bound():
    obs = Observable(0.0)
    noise = NoiseModel(0.05)
    for n in (10**3, 10**4, 10**5):
        sched = threshold_for(MeasureModel(), obs, 1.0, n)
        rep = short_return_prob(doubling(), noise, 0.0, sched, trials=20000, seed=n)
        assert rep.within_bound
        assert rep.bound == pytest.approx(short_return_bound(doubling(), noise, rep.diameter, rep.alpha_n))


def test_kac_mean_rejects_censoring():
    rb = hitting_times(doubling(), None, Ball(0.3, 0.001), 50, seed=0, start=IN_TARGET, horizon=2)
    with pytest.raises(ValueError):
        kac_mean(rb)


def test_hitting_times_are_geometric_for_iid_like_noise():
    # noise of half-width 1/2 spreads each step over the circle, so hits are nearly iid
    hb = hitting_times(doubling(), NoiseModel(0.5), Ball(0.5, 0.01), 5000, seed=4, start=AMBIENT)
    res = stats.kstest(hb.normalized, "expon")
    assert res.statistic < 0.03


def test_first_return_grows_as_target_shrinks():
    # a point just off the period-4 orbit of 1/5: smaller balls need longer excursions to return
    z = F(1, 5) + F(1, 997)
    Rs = [first_return_min(doubling(), ball(z, r), horizon=200).value for r in (F(1, 50), F(1, 500), F(1, 5000))]
    assert all(R is not None for R in Rs)
    assert Rs == sorted(Rs) and Rs[0] < Rs[-1]
