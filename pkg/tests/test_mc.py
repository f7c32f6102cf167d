import math
from fractions import Fraction

import numpy as np
import pytest

from sdemsr.errors import InvalidInput, ShapeMismatch, TooManySlots, UnstablePath
from sdemsr.mc import MCConfig, exact_benchmark, isserlis_gamma_delta, simulate
from sdemsr.model import plateau

from conftest import make_model


def test_zero_coupling_is_exact():
    m = make_model([0.0, 0.5], [0.0, 1.0], Fraction(1, 2), epsilon=0.0)
    cfg = MCConfig("heun", 1e-2, 2000, 1, (0.8,), ((0,), (0, 0)))
    r = simulate(m, cfg).by_monomial()
    assert r[(0,)].estimate == m.x0 and r[(0,)].stderr == 0.0
    assert r[(0, 0)].estimate == m.x0**2


def test_deterministic_per_seed():
    m = make_model([], [0.0, 1.0], Fraction(1, 2), epsilon=0.3)
    cfg = MCConfig("heun", 2e-3, 4000, 11, (0.8,), ((0,),))
    a = simulate(m, cfg).rows[0]
    b = simulate(m, cfg).rows[0]
    assert a.estimate == b.estimate and a.stderr == b.stderr


def test_stderr_shrinks_with_paths():
    m = make_model([], [0.0, 1.0], Fraction(1, 2), epsilon=0.3)
    base = MCConfig("heun", 2e-3, 8000, 5, (0.8,), ((0,),))
    big = MCConfig("heun", 2e-3, 32000, 5, (0.8,), ((0,),))
    se1 = simulate(m, base).rows[0].stderr
    se4 = simulate(m, big).rows[0].stderr
    assert 1.6 <= se1 / se4 <= 2.4


def test_heun_matches_midpoint_mean():
    m = make_model([], [0.0, 1.0], Fraction(1, 2), epsilon=0.4)
    cfg = MCConfig("heun", 1e-3, 40000, 42, (0.8,), ((0,),))
    row = simulate(m, cfg).rows[0]
    exact, _ = exact_benchmark("gbm_moments", m, [0.8])[0]
    assert abs(row.estimate - exact) <= 3 * row.stderr


def test_euler_keeps_flat_mean():
    m = make_model([], [0.0, 1.0], Fraction(0), epsilon=0.4)
    cfg = MCConfig("euler_maruyama", 1e-3, 40000, 43, (0.8,), ((0,),))
    row = simulate(m, cfg).rows[0]
    assert abs(row.estimate - m.x0) <= 3 * row.stderr + 2e-3  # weak-order-1 bias margin


def test_schemes_agree_for_constant_amplitude():
    m = make_model([0.0, -0.5], [1.0], Fraction(0), epsilon=0.5)
    kw = dict(dt=2e-3, paths=30000, times=(0.8,), monomials=((0,),))
    a = simulate(m, MCConfig("heun", seed=3, **kw)).rows[0]
    b = simulate(m, MCConfig("euler_maruyama", seed=3, **kw)).rows[0]
    assert abs(a.estimate - b.estimate) <= 3 * math.hypot(a.stderr, b.stderr) + 2e-3


def test_antithetic_runs():
    m = make_model([], [0.0, 1.0], Fraction(1, 2), epsilon=0.3)
    cfg = MCConfig("heun", 2e-3, 4000, 11, (0.8,), ((0,),), antithetic=True)
    row = simulate(m, cfg).rows[0]
    assert math.isfinite(row.estimate)


def test_unstable_path_reported():
    m = make_model([], [0.0, 1.0], Fraction(1, 2), sigma=1e6, epsilon=1.0)
    cfg = MCConfig("euler_maruyama", 5e-3, 1000, 2, (1.2,), ((0,),))
    with pytest.raises(UnstablePath):
        simulate(m, cfg)


def test_config_validation():
    with pytest.raises(InvalidInput):
        MCConfig("rk4", 1e-3, 2000, 1, (0.5,), ((0,),))
    with pytest.raises(InvalidInput):
        MCConfig("heun", 1e-3, 10, 1, (0.5,), ((0,),))


class TestBenchmarks:
    def test_linear_mean_flat_at_zero_rate(self):
        m = make_model([0.0, 0.0], [1.0], 0)
        with pytest.raises(ShapeMismatch):
            exact_benchmark("linear_mean", m, [0.5])

    def test_linear_mean(self):
        m = make_model([0.0, 0.3], [1.0], 0)
        (val,) = exact_benchmark("linear_mean", m, [0.8])
        assert val > m.x0

    def test_gbm_shape_guard(self):
        m = make_model([0.0, 0.3], [1.0], 0)
        with pytest.raises(ShapeMismatch):
            exact_benchmark("gbm_moments", m, [0.5])

    def test_brownian_cov_before_support(self):
        m = make_model([], [1.0], 0)
        cov = exact_benchmark("brownian_cov", m, [-0.8, 0.9])
        assert cov[0, 0] == 0.0 and cov[0, 1] == 0.0
        assert cov[1, 1] > 0.0

    def test_ou_variance_long_window(self):
        chi_long = plateau(-0.5, 0.0, 6.0, 6.5)
        m = make_model([0.0, -1.0], [1.0], 0, chi=chi_long)
        (var,) = exact_benchmark("ou_variance", m, [6.0])
        assert var == pytest.approx(m.sigma / 2.0, rel=2e-2)

    def test_gbm_against_simulation(self):
        m = make_model([], [0.0, 1.0], Fraction(1, 2), epsilon=0.4)
        m1, m2 = exact_benchmark("gbm_moments", m, [0.8])[0]
        cfg = MCConfig("heun", 1e-3, 40000, 9, (0.8,), ((0,), (0, 0)))
        rows = simulate(m, cfg).by_monomial()
        assert abs(rows[(0,)].estimate - m1) <= 3 * rows[(0,)].stderr
        assert abs(rows[(0, 0)].estimate - m2) <= 3 * rows[(0, 0)].stderr


class TestIsserlisOracle:
    def test_odd_slots_zero(self):
        fn = lambda S: np.ones(S.shape[1])
        assert isserlis_gamma_delta(fn, np.linspace(0, 1, 10), 1) == 0.0

    def test_slot_bound(self):
        fn = lambda S: np.ones(S.shape[1])
        with pytest.raises(TooManySlots):
            isserlis_gamma_delta(fn, np.linspace(0, 1, 4), 8)

    def test_two_slot_gaussian_identity(self):
        # functional int f(s) g(s') xi(s) xi(s') -> int f g
        grid = np.linspace(0.0, 1.0, 400, endpoint=False) + 1.0 / 800

        def fn(S):
            return np.sin(S[0]) * np.cos(S[1])

        ref = float(np.trapezoid(np.sin(grid) * np.cos(grid), grid))
        est = isserlis_gamma_delta(fn, grid, 2)
        assert est == pytest.approx(ref, abs=1e-4)

    def test_four_slot_pairing_count(self):
        # constant integrand: the three pairings each give volume^2
        grid = np.linspace(0.0, 1.0, 30, endpoint=False) + 1.0 / 60
        fn = lambda S: np.ones(S.shape[1])
        est = isserlis_gamma_delta(fn, grid, 4)
        assert est == pytest.approx(3.0, rel=1e-9)
