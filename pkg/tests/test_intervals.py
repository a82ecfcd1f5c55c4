from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evlab.experiments import discontinuous_map, inner_interval_map
from evlab.intervals import IntervalSet, PieceBlowup, ball, image, preimage, preimage_iter
from evlab.maps import Branch, PiecewiseMap, doubling, times_m

F = Fraction


def test_normalisation_merges_and_drops():
    s = IntervalSet.of([(F(1, 2), F(3, 4)), (0, F(1, 4)), (F(1, 4), F(1, 3)), (F(1, 5), F(1, 5))])
    assert s.pieces == ((0, F(1, 3)), (F(1, 2), F(3, 4)))
    assert s.measure() == F(7, 12)


def test_set_algebra():
    a = IntervalSet.of([(0, F(1, 2))])
    b = IntervalSet.of([(F(1, 4), F(3, 4))])
    assert a.intersect(b).pieces == ((F(1, 4), F(1, 2)),)
    assert a.union(b).pieces == ((0, F(3, 4)),)
    assert a.difference(b).pieces == ((0, F(1, 4)),)
    assert a.overlaps(b)
    assert not a.overlaps(IntervalSet.of([(F(1, 2), 1)]))
    assert a.contains(F(1, 3)) and not a.contains(F(1, 2))


def test_ball_wraps_on_circle():
    b = ball(0, F(1, 10))
    assert b.pieces == ((0, F(1, 10)), (F(9, 10), 1))
    assert b.measure() == F(1, 5)
    assert ball(F(1, 20), F(1, 10), "interval").pieces == ((0, F(3, 20)),)
    assert ball(0, F(1, 2)) == IntervalSet.full()
    assert ball(0, 0).is_empty


def test_doubling_preimage_of_ball_at_zero():
    U = ball(0, F(1, 100))
    pre = preimage(doubling(), U)
    assert pre.measure() == U.measure()
    assert pre.intersect(U) == ball(0, F(1, 200))


def test_image_of_small_ball():
    U = ball(F(1, 3), F(1, 100))
    assert image(doubling(), U) == ball(F(2, 3), F(1, 50))


def test_interval_topology_image_is_clipped():
    f = inner_interval_map()
    im = image(f, IntervalSet.full())
    assert im.pieces == ((F(1, 20), F(19, 20)),)


def test_non_affine_map_refused():
    f = PiecewiseMap((Branch(0, 0.5, 2.0, 0.0), Branch(0.5, 1, 2.0, -1.0)))
    with pytest.raises(ValueError):
        preimage(f, ball(0, F(1, 10)))


def test_blowup_guard():
    with pytest.raises(PieceBlowup):
        preimage_iter(doubling(), ball(F(1, 3), F(1, 1000)), 12, max_pieces=100)


pieces = st.lists(st.tuples(st.fractions(0, 1), st.fractions(0, 1)), max_size=5).map(
    lambda ps: IntervalSet.of([(min(a, b), max(a, b)) for a, b in ps]))


@settings(max_examples=100, deadline=None)
@given(pieces)
def test_lebesgue_invariance_of_preimages(s):
    for f in (doubling(), times_m(3), discontinuous_map()):
        assert preimage(f, s).measure() == s.measure()


@settings(max_examples=100, deadline=None)
@given(pieces, pieces)
def test_inclusion_exclusion(a, b):
    assert a.union(b).measure() + a.intersect(b).measure() == a.measure() + b.measure()
    assert a.difference(b).measure() == a.measure() - a.intersect(b).measure()


@settings(max_examples=60, deadline=None)
@given(pieces)
def test_image_of_preimage_is_inside(s):
    f = doubling()
    back = image(f, preimage(f, s))
    assert back.difference(s).measure() == 0
