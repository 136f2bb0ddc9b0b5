from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kvnlab.polynomial import P, Poly, Q, p, q

small_int = st.integers(-5, 5)
classical_terms = st.dictionaries(
    st.tuples(st.integers(0, 3), st.integers(0, 3)), small_int, max_size=5)


@st.composite
def classical_polys(draw):
    return Poly(draw(classical_terms))


def test_symbols_and_degree():
    h = p**2 / 2 + q**2 / 2
    assert h.degree == 2
    assert h.is_classical and h.is_exact
    assert h.coefficient((2, 0)) == Fraction(1, 2)
    assert (q * Q + p * P).degree == 2
    assert not (q * Q).is_classical
    assert (Q**2 + P**2).is_hidden_only


def test_zero_terms_dropped():
    assert (q - q).is_zero
    assert Poly({(1, 0): 0}).is_zero


def test_normal_order_products():
    # multiplicative factors on the left of derivative factors are fine
    assert (q * P).coefficient((1, 0, 0, 1)) == 1
    assert (p * Q).coefficient((0, 1, 1, 0)) == 1
    # putting P left of q would need a commutator
    with pytest.raises(ValueError):
        P * q
    with pytest.raises(ValueError):
        Q * p
    # Q and q commute, so no reordering is required
    assert (Q * q) == (q * Q)


def test_bad_exponents_and_coefficients():
    with pytest.raises(ValueError):
        Poly({(1, 2, 3): 1})
    with pytest.raises(ValueError):
        Poly({(-1, 0): 1})
    with pytest.raises(ValueError):
        Poly({(1, 0): float("nan")})
    with pytest.raises(ValueError):
        q ** -1


def test_diff_and_integrate_exact():
    f = 3 * q**2 * p + p**3
    assert f.diff("q") == 6 * q * p
    assert f.diff("p") == 3 * q**2 + 3 * p**2
    assert (q**3).integrate("q") == q**4 / 4
    assert (q**3).integrate("q").coefficient((4, 0)) == Fraction(1, 4)


def test_evaluation():
    f = 1 + q * p**2
    assert f(2.0, 3.0) == pytest.approx(19.0)
    grid = np.linspace(-1, 1, 5)
    np.testing.assert_allclose(f(grid, grid), 1 + grid**3)
    np.testing.assert_allclose(f.compile()(grid, 2.0), 1 + 4 * grid)
    with pytest.raises(ValueError):
        Q(1.0, 1.0)


def test_split_hidden_groups_by_hidden_exponents():
    op = q * Q + p * P + 2 * P + q**2
    groups = dict(op.split_hidden())
    assert groups[(1, 0)] == q
    assert groups[(0, 1)] == p + 2
    assert groups[(0, 0)] == q**2


def test_isclose_float_vs_exact():
    assert (q / 2).isclose(0.5 * q)
    assert not (q / 2).isclose(0.5 * q + 1e-6 * p, atol=1e-9)


@given(classical_polys(), classical_polys(), st.floats(-2, 2), st.floats(-2, 2))
def test_arithmetic_matches_pointwise(f, g, x, y):
    np.testing.assert_allclose((f * g)(x, y), f(x, y) * g(x, y), rtol=1e-9, atol=1e-9)
    np.testing.assert_allclose((f + g)(x, y), f(x, y) + g(x, y), rtol=1e-9, atol=1e-9)


@given(classical_polys())
def test_integrate_then_diff_roundtrip(f):
    assert f.integrate("p").diff("p") == f
    assert f.integrate("q").diff("q") == f


@given(classical_polys(), classical_polys())
def test_hash_consistent_with_eq(f, g):
    if f == g:
        assert hash(f) == hash(g)
    assert f + g == g + f
