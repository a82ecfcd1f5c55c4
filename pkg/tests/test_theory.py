from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evlab.experiments import discontinuous_map, inner_interval_map, pmf_grid_check
from evlab.maps import MINUS, PLUS, affine_map, classify, doubling, times_m
from evlab.maps import NoiseModel
from evlab.stochastic import MeasureModel, Observable, simulate, threshold_for
from evlab.theory import (APERIODIC, EVENTUAL, NO_SWITCH, ONE_SWITCH, RETURNING, TWO_SWITCH, NonSimpleData,
                          annulus_family, chain_measures, ei_from_annulus, ei_multidim_periodic, ei_nonsimple,
                          ei_periodic_1d, geometric_multiplicity, block_bound_residual,
                          estimate_side_masses, multiplicity_from_annuli, multiplicity_nonsimple, nonsimple_data,
                          prediction_record, regime_ok)

F = Fraction
HALF = F(1, 2)


def test_periodic_indices():
    assert ei_periodic_1d(2) == HALF
    assert ei_periodic_1d(4) == F(3, 4)
    assert ei_multidim_periodic(4) == F(3, 4)
    assert ei_multidim_periodic(6) == F(5, 6)
    with pytest.raises(ValueError):
        ei_multidim_periodic(1)
    with pytest.raises(ValueError):
        ei_periodic_1d(F(1, 2))


def test_geometric_law():
    law = geometric_multiplicity(F(3, 4))
    assert law(1) == F(3, 4) and law(2) == F(3, 16)
    assert law.total() == pytest.approx(1.0, abs=1e-14)
    assert law.mean() == pytest.approx(4 / 3)


def test_sided_return_on_one_side():
    d = NonSimpleData(F(1, 4), None, HALF, HALF, {PLUS: PLUS})
    assert d.case == RETURNING
    assert ei_nonsimple(d) == F(7, 8)
    law = multiplicity_nonsimple(d)
    assert law(1) + law(2) + law(3) < 1
    assert law.total() == pytest.approx(1.0, abs=1e-14)


def test_eventually_aperiodic_law():
    d = NonSimpleData(HALF, None, HALF, HALF, {PLUS: MINUS})
    assert d.case == EVENTUAL and ei_nonsimple(d) == F(3, 4)
    law = multiplicity_nonsimple(d)
    assert (law(1), law(2), law(3)) == (F(2, 3), F(1, 3), 0)


def test_discontinuous_map_at_zero_from_classification():
    d = nonsimple_data(classify(discontinuous_map(), F(0)))
    assert ei_nonsimple(d) == F(3, 4)


def test_no_switch_from_doubly_returning_map():
    f = affine_map([(0, "1/2", 2, 0), ("1/2", 1, 3, "-5/2")])
    d = nonsimple_data(classify(f, F(0)))
    assert d.case == NO_SWITCH
    assert ei_nonsimple(d) == 1 - HALF * HALF - HALF * F(1, 6)
    assert ei_nonsimple(d) == F(2, 3)


def test_one_switch_and_two_switch():
    one = NonSimpleData(F(1, 3), F(1, 4), HALF, HALF, {PLUS: PLUS, MINUS: PLUS})
    assert one.case == ONE_SWITCH
    assert ei_nonsimple(one) == 1 - HALF * (F(1, 3) + F(1, 4))
    assert ei_nonsimple(one) == F(17, 24)
    two = NonSimpleData(F(1, 3), F(1, 4), HALF, HALF, {PLUS: MINUS, MINUS: PLUS})
    assert two.case == TWO_SWITCH
    assert ei_nonsimple(two) == F(17, 24)
    law = multiplicity_nonsimple(two)
    P = F(1, 12)
    for j in range(1, 5):
        assert law(2 * j + 2) / law(2 * j) == P


def test_aperiodic_nonsimple_is_one():
    d = NonSimpleData(None, None, HALF, HALF, {})
    assert d.case == APERIODIC and ei_nonsimple(d) == 1
    assert multiplicity_nonsimple(d)(1) == 1


def test_side_data_validation():
    with pytest.raises(ValueError):
        NonSimpleData(HALF, None, F(1, 3), F(1, 3), {PLUS: PLUS})
    with pytest.raises(ValueError):
        NonSimpleData(F(3, 2), None, HALF, HALF, {PLUS: PLUS})
    with pytest.raises(ValueError):
        NonSimpleData(HALF, None, HALF, HALF, {})
    with pytest.raises(ValueError):
        multiplicity_nonsimple(NonSimpleData(HALF, None, HALF, HALF, {PLUS: PLUS}), theta=F(1, 2))


def test_closed_form_agrees_with_chain_in_regime():
    for d in (NonSimpleData(F(1, 4), None, HALF, HALF, {PLUS: PLUS}),
              NonSimpleData(HALF, None, HALF, HALF, {PLUS: MINUS}),
              NonSimpleData(F(1, 3), F(1, 5), HALF, HALF, {PLUS: PLUS, MINUS: MINUS}),
              NonSimpleData(F(1, 3), F(1, 4), HALF, HALF, {PLUS: MINUS, MINUS: PLUS})):
        assert regime_ok(d)
        ch = chain_measures(d, kmax=60)
        law = multiplicity_nonsimple(d)
        assert ch.theta == law.theta
        pmf = ch.pmf() + [0] * 8
        for k in range(1, 8):
            assert float(pmf[k - 1]) == pytest.approx(float(law(k)), abs=1e-12)


def test_regime_violation_is_detected():
    # a large alpha on the landing side breaks the nesting
    d = NonSimpleData(F(9, 10), None, F(1, 10), F(9, 10), {PLUS: MINUS})
    assert not regime_ok(d)
    assert ei_nonsimple(d) == F(19, 100)
    assert chain_measures(d).theta == F(9, 10)


def test_oversubscribed_landing_side_is_out_of_regime():
    # both sides land on + with a+ + a- > 1: no invariant measure has this
    d = NonSimpleData(F(3, 5), F(3, 5), F(3, 5), F(2, 5), {PLUS: PLUS, MINUS: PLUS})
    assert not regime_ok(d)
    assert multiplicity_nonsimple(d).array()[0] < 0


@settings(max_examples=80, deadline=None)
@given(st.integers(1, 9), st.integers(1, 9), st.integers(1, 9), st.sampled_from(
    [{PLUS: PLUS, MINUS: MINUS}, {PLUS: PLUS, MINUS: PLUS}, {PLUS: MINUS, MINUS: MINUS},
     {PLUS: MINUS, MINUS: PLUS}]))
def test_pmf_identities_in_regime(i, j, k, landing):
    d = NonSimpleData(F(i, 10), F(j, 10), F(k, 10), 1 - F(k, 10), landing)
    if not regime_ok(d):
        return
    law = multiplicity_nonsimple(d)
    assert law.total() == pytest.approx(1.0, abs=1e-12)
    assert float(law.theta) * law.mean() == pytest.approx(1.0, abs=1e-10)
    assert np.all(law.array() >= -1e-15)


def test_pmf_grid_summary():
    g = pmf_grid_check()
    assert g["pass"]
    assert g["cases"] > 5000
    assert g["max_sum_dev"] <= 1e-12


def test_annulus_doubling_at_zero():
    r = F(1, 100)
    fam = annulus_family(doubling(), F(0), 1, radius=r, kappa_max=20)
    for kappa, q in enumerate(fam.mu_annuli):
        assert q == r / 2 ** kappa
    assert ei_from_annulus(fam.mu_annuli[0], fam.mu_U) == HALF
    pi = multiplicity_from_annuli(fam.mu_annuli)
    assert pi[:3] == [HALF, F(1, 4), F(1, 8)]
    assert sum(fam.mu_annuli, F(0)) + fam.mu_remainder == fam.mu_U


def test_annulus_period_two_and_tripling():
    fam = annulus_family(doubling(), F(1, 3), 2, radius=F(1, 1000), kappa_max=10)
    assert ei_from_annulus(fam.mu_annuli[0], fam.mu_U) == F(3, 4)
    fam3 = annulus_family(times_m(3), HALF, 1, radius=F(1, 1000), kappa_max=10)
    assert ei_from_annulus(fam3.mu_annuli[0], fam3.mu_U) == F(2, 3)


def test_annulus_nonsimple_point_is_complete():
    cls = classify(discontinuous_map(), F(0))
    fam = annulus_family(discontinuous_map(), F(0), radius=F(1, 1000), classification=cls)
    assert fam.complete
    assert ei_from_annulus(fam.mu_annuli[0], fam.mu_U) == F(3, 4)
    assert multiplicity_from_annuli(fam.mu_annuli, complete=True) == [F(2, 3), F(1, 3)]


def test_annulus_validation():
    with pytest.raises(ValueError):
        annulus_family(doubling(), F(0), 1, radius=F(0))
    with pytest.raises(ValueError):
        annulus_family(doubling(), F(0), radius=F(1, 10))
    with pytest.raises(ZeroDivisionError):
        multiplicity_from_annuli([0])


def test_block_bound_holds_at_fixed_point():
    obs = Observable(0.0)
    sched = threshold_for(MeasureModel(), obs, 1.0, 4000)
    b = simulate(doubling(), None, obs, sched, 500, seed=11)
    for kappa in (0, 1, 2):
        res = block_bound_residual(b, sched, p=1, s=20, kappa=kappa)
        assert res.holds, (kappa, res)
    with pytest.raises(ValueError):
        block_bound_residual(b, sched, p=0, s=20, kappa=1)


def test_prediction_record():
    assert prediction_record(F(3, 4)) == {"exact": "3/4", "decimal": 0.75}
    assert prediction_record(0.5)["exact"] is None


def test_two_switch_hand_value():
    d = NonSimpleData(HALF, F(1, 3), HALF, HALF, {PLUS: MINUS, MINUS: PLUS})
    assert ei_nonsimple(d) == F(7, 12)


def test_eventual_law_has_support_two():
    law = multiplicity_nonsimple(NonSimpleData(None, F(2, 5), F(3, 10), F(7, 10), {MINUS: PLUS}))
    assert all(law(k) == 0 for k in range(3, 12))


def test_estimated_side_masses_lebesgue():
    pts = np.random.default_rng(0).random(10**6)
    est = estimate_side_masses(pts, 0.0, 0.01)
    assert abs(est.alpha_plus - 0.5) <= 4 * est.se
    d = NonSimpleData(HALF, None, est.alpha_plus, est.alpha_minus, {PLUS: MINUS})
    assert float(ei_nonsimple(d)) == pytest.approx(0.75, abs=4 * est.se)


def test_estimated_side_masses_noisy_interval_map():
    m = MeasureModel.empirical_from(inner_interval_map(), NoiseModel(0.05), seed=1, size=4 * 10**5)
    est = estimate_side_masses(m.samples, F(1, 3), 0.02, topology="interval")
    assert est.count > 1000
    assert est.alpha_plus + est.alpha_minus == pytest.approx(1.0)
    assert 0 < est.alpha_plus < 1
    with pytest.raises(ValueError):
        estimate_side_masses(np.array([0.9]), 0.1, 0.01, topology="interval")
