from fractions import Fraction

import pytest

from sdemsr.evaluate import QuadConfig
from sdemsr.model import ModelSpec, Polynomial1D, plateau


STD_CHI = plateau(-0.5, 0.0, 1.0, 1.5)
TIMES = (0.6, 0.9)


def make_model(alpha, beta, theta0, sigma=1.0, x0=1.0, chi=STD_CHI, epsilon=1.0):
    return ModelSpec(
        alpha=Polynomial1D.from_list(alpha),
        beta=Polynomial1D.from_list(beta),
        sigma=sigma,
        x0=x0,
        theta0=Fraction(theta0),
        chi=chi,
        epsilon=epsilon,
    )


@pytest.fixture
def chi():
    return STD_CHI


@pytest.fixture
def times():
    return TIMES


@pytest.fixture
def quad():
    return QuadConfig()


@pytest.fixture
def additive_linear():
    """alpha = 0.3 x, beta = 1."""
    return make_model([0.0, 0.3], [1.0], 0)


@pytest.fixture
def additive_quadratic():
    """alpha = 0.3 x + 0.1 x^2, beta = 1."""
    return make_model([0.0, 0.3, 0.1], [1.0], 0)


@pytest.fixture
def mult_linear():
    """beta = x, alpha = 0, midpoint convention."""
    return make_model([], [0.0, 1.0], Fraction(1, 2))


@pytest.fixture
def mult_quadratic():
    """beta = 1 + 0.2 x^2, alpha = 0, midpoint convention."""
    return make_model([], [1.0, 0.0, 0.2], Fraction(1, 2))


@pytest.fixture
def general_model():
    """alpha = 0.3 x, beta = x, midpoint convention."""
    return make_model([0.0, 0.3], [0.0, 1.0], Fraction(1, 2))
