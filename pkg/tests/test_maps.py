import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import trapezoid

from evlab.experiments import discontinuous_map, inner_interval_map
from evlab.maps import (DOUBLY_RETURNING, MINUS, PLAIN, PLUS, SIMPLE_APERIODIC,
                        SIMPLE_PERIODIC, SINGLY_RETURNING, Branch, NoiseModel, PiecewiseMap, SidedPoint,
                        TorusLinearMap, affine_map, classify, doubling, expansion_bounds, map_from_dict,
                        map_to_dict, noise_from_dict, orbit, random_orbit, random_step, step, step_sided,
                        step_array, times_m)

F = Fraction


# -- evaluation ----------------------------------------------------------------


def test_step_doubling_values():
    assert step(doubling(), 0.3) == pytest.approx((0.6, 0))
    y, i = step(doubling(), 0.75)
    assert (y, i) == (0.5, 1)


def test_step_torus():
    A = TorusLinearMap(((2, 1), (1, 1)))
    y, _ = step(A, (F(1, 2), F(1, 2)))
    assert y == (F(1, 2), F(0))


def test_step_rejects_points_outside():
    with pytest.raises(ValueError):
        step(doubling(), 1.0)
    with pytest.raises(ValueError):
        step(doubling(), -0.1)
    with pytest.raises(ValueError):
        step(TorusLinearMap(((2, 0), (0, 2))), (0.5, 1.2))


def test_boundary_uses_right_branch():
    assert step(doubling(), F(1, 2)) == (F(0), 1)


def test_step_sided_tripling():
    f = times_m(3)
    assert step_sided(f, SidedPoint(F(1, 3), MINUS)).location == 0
    assert step_sided(f, SidedPoint(F(1, 3), PLUS)).location == 0
    assert step_sided(f, SidedPoint(F(1, 5))) == SidedPoint(step(f, F(1, 5))[0], PLAIN)


def test_step_sided_needs_boundary():
    with pytest.raises(ValueError):
        step_sided(doubling(), SidedPoint(F(1, 5), PLUS))


def test_random_step_examples():
    f, noise = doubling(), NoiseModel(0.6)
    assert random_step(f, noise, 0.3, 0.05) == pytest.approx(0.65)
    assert random_step(f, noise, 0.75, -0.6) == pytest.approx(0.9)
    assert random_step(f, noise, F(2, 7), 0) == step(f, F(2, 7))[0]


def test_random_step_rejects_noise_outside_support():
    with pytest.raises(ValueError):
        random_step(doubling(), NoiseModel(0.05), 0.3, 0.1)


def test_interval_topology_refuses_exit():
    f = inner_interval_map()
    with pytest.raises(ValueError):
        random_step(f, NoiseModel(0.2), 0.0, -0.1)
    # the image [1/20, 19/20) leaves room for noise of size 1/20
    assert 0 <= random_step(f, NoiseModel(0.05), 0.0, -0.05) <= 1


def test_orbit_exact_and_trivial():
    assert orbit(doubling(), F(1, 3), 4) == [F(1, 3), F(2, 3), F(1, 3), F(2, 3), F(1, 3)]
    assert orbit(doubling(), 0.2, 0) == [0.2]
    with pytest.raises(ValueError):
        orbit(doubling(), 0.2, -1)


def test_random_orbit_reproducible():
    noise = NoiseModel(0.05)
    a, wa = random_orbit(doubling(), noise, 0.2, 11, 50)
    b, wb = random_orbit(doubling(), noise, 0.2, 11, 50)
    assert a == b and np.array_equal(wa, wb)
    assert np.all(np.abs(wa) <= 0.05)


# -- classification --------------------------------------------------------------


@pytest.mark.parametrize("zeta,period", [(F(0), 1), (F(1, 3), 2), (F(1, 7), 3)])
def test_classify_doubling_periodic(zeta, period):
    cls = classify(doubling(), zeta, horizon=10)
    assert cls.kind == SIMPLE_PERIODIC and cls.period == period
    assert cls.deriv_product == 2 ** period


def test_classify_preperiodic_point_is_simple_aperiodic():
    cls = classify(doubling(), F(1, 6), horizon=50)
    assert cls.kind == SIMPLE_APERIODIC


def test_classify_eventually_aperiodic_target():
    cls = classify(discontinuous_map(), F(0))
    assert cls.kind == SINGLY_RETURNING and cls.eventually_aperiodic
    plus, minus = cls.sided_return(PLUS), cls.sided_return(MINUS)
    assert plus.period == 1 and plus.landing == MINUS and plus.factor == F(1, 2)
    assert minus.period is None and minus.certified_never


def test_classify_doubly_returning():
    # 2x on [0, 1/2), 3x - 5/2 on [1/2, 1): 0+ is fixed, 0- -> 1/2- -> 0-
    f = affine_map([(0, "1/2", 2, 0), ("1/2", 1, 3, "-5/2")])
    cls = classify(f, F(0))
    assert cls.kind == DOUBLY_RETURNING and cls.switches == 0
    assert cls.periods == {PLUS: 1, MINUS: 2}
    assert cls.factors == {PLUS: F(1, 2), MINUS: F(1, 6)}


def test_classify_refuses_float_maps():
    f = PiecewiseMap((Branch(0, 0.5, 2.0, 0.0), Branch(0.5, 1, 2.0, -1.0)))
    assert not f.exact_affine
    with pytest.raises((ValueError, TypeError)):
        classify(f, F(1, 3))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 60), st.integers(2, 61))
def test_classify_horizon_monotone(num, den):
    if num >= den:
        num = num % den
    z = F(num, den)
    short = classify(doubling(), z, horizon=5)
    long = classify(doubling(), z, horizon=200)
    if short.kind == SIMPLE_PERIODIC:
        assert long.kind == SIMPLE_PERIODIC and long.period == short.period
    assert long.return_lower_bound >= short.return_lower_bound or long.kind == SIMPLE_PERIODIC
    assert classify(doubling(), z, horizon=200) == long


# -- structure -------------------------------------------------------------------


def test_expansion_bounds():
    assert expansion_bounds(doubling()) == (2, 2)
    f = affine_map([(0, "1/3", 2, 0), ("1/3", "2/3", 3, -1), ("2/3", 1, "5/2", "-5/3")])
    assert expansion_bounds(f) == (2, 3)
    lo, hi = expansion_bounds(TorusLinearMap(((2, 0), (0, 3))))
    assert (lo, hi) == pytest.approx((2, 3))


def test_map_validation():
    with pytest.raises(ValueError):
        affine_map([(0, "1/2", 2, 0), ("1/3", 1, 2, -1)])
    with pytest.raises(ValueError):
        affine_map([(0, 1, 1, 0)])
    with pytest.raises(ValueError):
        TorusLinearMap(((1, 2), (2, 4)))
    with pytest.raises(ValueError):
        NoiseModel(0.0)
    with pytest.raises(ValueError):
        NoiseModel(0.1, "cauchy")


def test_discontinuity_detection_mod_one():
    assert doubling().discontinuities() == ()
    assert F(0) in discontinuous_map().discontinuities()
    assert F(1, 3) in times_m(3).boundary_points()
    assert not times_m(3).is_discontinuity(F(1, 3))


def test_lebesgue_preservation():
    assert doubling().preserves_lebesgue()
    assert times_m(3).preserves_lebesgue()
    assert discontinuous_map().preserves_lebesgue()
    assert not inner_interval_map().preserves_lebesgue()


def test_json_roundtrip():
    for f in (doubling(), discontinuous_map(), inner_interval_map()):
        spec = json.loads(json.dumps(map_to_dict(f)))
        assert map_from_dict(spec) == f
    t = TorusLinearMap(((2, 1), (1, 1)))
    assert map_from_dict(map_to_dict(t)) == t
    assert noise_from_dict({"epsilon": "1/20"}).epsilon == pytest.approx(0.05)
    with pytest.raises(ValueError):
        map_from_dict({"type": "spline"})


@pytest.mark.parametrize("kind", ["uniform", "symmetric-triangular"])
def test_noise_density_bounds_and_normalisation(kind):
    n = NoiseModel(0.1, kind)
    w = np.linspace(-0.1, 0.1, 20001)
    g = n.density(w)
    assert g.min() >= n.g_lo - 1e-12 and g.max() <= n.g_hi + 1e-12
    assert trapezoid(g, w) == pytest.approx(1.0, abs=1e-6)
    s = n.sample(np.random.default_rng(0), 20000)
    assert np.all(np.abs(s) <= 0.1)
    assert abs(s.mean()) < 0.003


# -- properties ------------------------------------------------------------------


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1, exclude_max=True))
def test_branch_index_contains_point(x):
    for f in (doubling(), times_m(3), discontinuous_map()):
        _, i = step(f, x)
        br = f.branches[i]
        assert br.a <= x < br.b


@settings(max_examples=100, deadline=None)
@given(st.fractions(0, 1).filter(lambda v: v < 1))
def test_zero_noise_equals_step(x):
    f = discontinuous_map()
    assert random_step(f, NoiseModel(0.05), x, 0) == step(f, x)[0]


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 10**6), st.integers(1, 20))
def test_exact_and_float_orbits_agree(num, n):
    x0 = F(num, 10**6 + 3)
    f = discontinuous_map()
    exact = orbit(f, x0, n)
    xs = float(x0)
    for j in range(1, n + 1):
        xs = float(step_array(f, np.array([xs]))[0])
        d = abs(xs - float(exact[j]))
        # circle distance: 0.9999 and 0 are neighbours
        assert min(d, 1 - d) <= 2.0 ** j * 4 * np.finfo(float).eps * 8
