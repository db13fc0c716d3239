import numpy as np
import pytest
from hypothesis import given, strategies as st

from voterperc import lattice

points = st.lists(st.integers(-50, 50), min_size=1, max_size=4).map(tuple)


def test_l1_ball_closed_forms():
    # d=3: |B1(1)| = 7, |B1(2)| = 25
    assert len(lattice.l1_ball((0, 0, 0), 1)) == 7
    assert len(lattice.l1_ball((0, 0, 0), 2)) == 25
    assert lattice.l1_ball_cardinality(1, 3) == 7
    assert lattice.l1_ball_cardinality(2, 3) == 25


@pytest.mark.parametrize("R,d", [(1, 1), (1, 2), (1, 3), (2, 3), (4, 3), (3, 4)])
def test_jump_offsets_shape(R, d):
    # copy targets are uniform over the punctured l1 ball of radius R
    offs = lattice.jump_offsets(R, d)
    assert offs.shape == (lattice.l1_ball_cardinality(R, d) - 1, d)
    norms = np.abs(offs).sum(axis=1)
    assert norms.min() == 1 and norms.max() == R
    # no duplicate offsets, origin excluded
    assert len({tuple(o) for o in offs}) == offs.shape[0]


@pytest.mark.parametrize("L,d", [(0, 3), (1, 3), (2, 3), (4, 3), (2, 2)])
def test_box_cardinality(L, d):
    pts = lattice.box_points((0,) * d, L)
    assert pts.shape[0] == (2 * L + 1) ** d
    assert lattice.linf_ball_cardinality(L, d) == pts.shape[0]


def test_sphere_points_are_shells():
    for r in (1, 2, 3):
        sph = lattice.sphere_points(r, 3)
        assert sph.shape[0] == (2 * r + 1) ** 3 - (2 * r - 1) ** 3
        assert (np.abs(sph).max(axis=1) == r).all()


@given(x=points)
def test_norms_agree_with_numpy(x):
    assert lattice.linf_norm(x) == (max(abs(c) for c in x))
    assert lattice.l1_norm(x) == sum(abs(c) for c in x)


@given(x=points, y=points)
def test_linf_triangle_inequality(x, y):
    if len(x) != len(y):
        return
    s = tuple(a + b for a, b in zip(x, y))
    assert lattice.linf_norm(s) <= lattice.linf_norm(x) + lattice.linf_norm(y)


@given(x=points)
def test_lex_order_is_irreflexive_and_total(x):
    assert not lattice.lex_less(x, x)
    y = tuple(c + 1 for c in x)
    assert lattice.lex_less(x, y) != lattice.lex_less(y, x)


def test_as_point_checks_dimension():
    assert lattice.as_point([1, 2, 3]) == (1, 2, 3)
    assert lattice.as_point((1, 2), 2) == (1, 2)
    with pytest.raises(ValueError):
        lattice.as_point((1, 2), 3)


def test_shift_points_round_trip():
    pts = lattice.box_points((1, -2, 0), 2)
    back = lattice.shift_points(lattice.shift_points(pts, (5, 5, 5)), (-5, -5, -5))
    assert (np.asarray(pts) == np.asarray(back)).all()


def test_box_spec_contains_and_points():
    box = lattice.BoxSpec((0, 0, 0), 2)
    pts = box.points()
    assert len(pts) == 125
    assert box.contains((2, -2, 0))
    assert not box.contains((3, 0, 0))
