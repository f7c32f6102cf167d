import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sdemsr.model import (
    Constant,
    CutoffFunction,
    ModelError,
    ModelSpec,
    PolyT,
    Polynomial1D,
    Sinusoid,
    bump,
    plateau,
)


def test_polynomial_degree_and_zero():
    p = Polynomial1D.from_list([0.0, 2.0, 0.0])
    assert p.degree == 1
    assert not p.is_zero()
    assert Polynomial1D.from_list([]).is_zero()
    assert Polynomial1D.from_list([1.0]).is_one()
    assert not Polynomial1D.from_list([1.0, 0.5]).is_one()


def test_polynomial_deriv_shifts_with_factorials():
    # d^2/dx^2 (c3 x^3) = 6 c3 x
    p = Polynomial1D.from_list([0.0, 0.0, 0.0, 5.0])
    d2 = p.deriv(2)
    assert d2.degree == 1
    assert d2(2.0, 0.0) == pytest.approx(5.0 * 6 * 2.0)
    assert p.deriv(4).is_zero()


@given(st.lists(st.floats(-3, 3, allow_nan=False), min_size=1, max_size=5), st.integers(0, 3), st.integers(0, 3))
def test_deriv_composes(coeffs, j, k):
    p = Polynomial1D.from_list(coeffs)
    a = p.deriv(j).deriv(k)
    b = p.deriv(j + k)
    x, t = 0.7, 0.3
    assert float(a(x, t)) == pytest.approx(float(b(x, t)), abs=1e-9)


def test_time_dependent_coefficients():
    p = Polynomial1D((Sinusoid(2.0, 1.0), Constant(1.0)))
    assert float(p(0.0, math.pi / 2)) == pytest.approx(2.0)
    q = Polynomial1D((PolyT((1.0, 1.0)),))
    assert float(q(0.0, 2.0)) == pytest.approx(3.0)


@pytest.mark.parametrize("fn", [plateau(-0.5, 0.0, 1.0, 1.5), bump(-1.0, 1.0)])
def test_cutoff_range_and_support(fn):
    ts = np.linspace(-3, 3, 2001)
    vals = fn(ts)
    assert np.all(vals >= 0.0) and np.all(vals <= 1.0)
    a, b = fn.support
    assert np.all(vals[(ts < a) | (ts > b)] == 0.0)


def test_plateau_is_one_on_window():
    fn = plateau(-0.5, 0.0, 1.0, 1.5)
    ts = np.linspace(0.0, 1.0, 101)
    assert np.allclose(fn(ts), 1.0)


def test_cutoff_validation():
    with pytest.raises(ModelError):
        CutoffFunction("plateau", 0.0, -1.0)
    with pytest.raises(ModelError):
        CutoffFunction("mystery", 0.0, 1.0)


def test_model_validation(chi):
    alpha = Polynomial1D.from_list([0.0, 1.0])
    beta = Polynomial1D.from_list([1.0])
    with pytest.raises(ModelError):
        ModelSpec(alpha, beta, sigma=-1.0, x0=0.0, theta0=Fraction(0), chi=chi)
    with pytest.raises(ModelError):
        ModelSpec(alpha, beta, sigma=1.0, x0=0.0, theta0=Fraction(2), chi=chi)
    m = ModelSpec(alpha, beta, sigma=1.0, x0=0.0, theta0=Fraction(1, 2), chi=chi, epsilon=0.5)
    assert float(m.chi_eps(0.5)) == pytest.approx(0.5)
