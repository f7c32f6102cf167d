import math
from fractions import Fraction

import numpy as np
import pytest

from sdemsr.diagrams import Correction, Diagram, DiagramSum, Drift, External, Noise, Xi, validate_diagram
from sdemsr.errors import BoundExceeded, InvalidInput, OrderTooLarge, ThetaMismatch
from sdemsr.evaluate import QuadConfig, evaluate_sum
from sdemsr.mc import isserlis_gamma_delta, xi_integrand_from_diagram
from sdemsr.msr import Monomial, _cumulative, msr_expectation
from sdemsr.sde import (
    assemble_product,
    contraction_pattern_census,
    perturb_solution,
    require_stratonovich,
    sde_expectation,
    solution_trees,
    unbloom_candidates,
    wick_contract,
)

from conftest import make_model


class TestSolutionTrees:
    def test_order_zero_is_bare(self, mult_linear):
        levels = solution_trees(mult_linear, 0)
        assert levels[0] == {None: Fraction(1)}

    def test_multiplicative_chains(self, mult_linear):
        # beta = x: each order is the single leaf chain with coefficient 1
        levels = solution_trees(mult_linear, 3)
        assert levels[1] == {("x", ()): Fraction(1)}
        assert levels[2] == {("x", (("x", ()),)): Fraction(1)}
        assert levels[3] == {("x", ((("x", (("x", ()),))),)): Fraction(1)}

    def test_additive_linear_has_drift_chain_and_leaf_variants(self, additive_linear):
        levels = solution_trees(additive_linear, 2)
        assert levels[1] == {("d", ()): Fraction(1), ("x", ()): Fraction(1)}
        # order 2: drift root over either order-1 term
        assert levels[2] == {
            ("d", (("d", ()),)): Fraction(1),
            ("d", (("x", ()),)): Fraction(1),
        }

    def test_branch_symmetry_factor(self, additive_quadratic):
        levels = solution_trees(additive_quadratic, 3, noise=False)
        branch = ("d", (("d", ()), ("d", ())))
        assert levels[3][branch] == Fraction(1, 2)

    def test_blooming(self, general_model):
        levels = solution_trees(general_model, 4)
        for n in range(2, 5):
            for tree in levels[n]:
                parents = set(unbloom_candidates(tree))
                assert parents & set(levels[n - 1]), f"no unbloom parent for {tree}"

    def test_perturb_solution_diagrams_validate(self, general_model):
        sums = perturb_solution(general_model, 3)
        for n, s in enumerate(sums):
            for rep in s.terms():
                assert validate_diagram(rep) == []
                assert rep.chi_order == n

    def test_order_bound(self, mult_linear):
        with pytest.raises(OrderTooLarge):
            perturb_solution(mult_linear, 9)


class TestWick:
    def test_single_leaf_vanishes(self, mult_linear):
        sums = perturb_solution(mult_linear, 1)
        assert wick_contract(sums[1]).is_zero()

    def test_adjacent_merge_value(self, mult_linear, quad):
        # second-order chain contracts to the correction vertex with the
        # forced equal-time factor 1/2
        levels = solution_trees(mult_linear, 2)
        forest = assemble_product([levels], Monomial.from_indices((0,)), (2,))
        contracted = wick_contract(forest)
        assert len(contracted) == 1
        ((_, (rep, c)),) = contracted.items()
        assert c == Fraction(1, 2)
        assert isinstance(rep.vertices[1], Correction)
        v, _ = evaluate_sum(contracted, mult_linear, [0.8], quad)
        a, b = mult_linear.chi.support
        xs, cum = _cumulative(lambda s: mult_linear.chi(s) ** 2, a, b, 8001)
        assert v == pytest.approx(0.5 * float(np.interp(0.8, xs, cum)), rel=1e-6)

    def test_cross_factor_pairing(self, mult_linear, times, quad):
        from sdemsr.msr import q_kernel

        s = sde_expectation(Monomial.from_indices((0, 1)), mult_linear, 2, times=times)
        noise_terms = [
            (rep, c)
            for _, (rep, c) in s.entry(2).items()
            if any(isinstance(k, Noise) for k in rep.vertices)
        ]
        assert len(noise_terms) == 1
        rep, c = noise_terms[0]
        assert c == 1
        v, _ = evaluate_sum(DiagramSum([(rep, c)]), mult_linear, times, quad)
        qk = q_kernel(mult_linear, grid=np.asarray(times))
        assert v == pytest.approx(mult_linear.sigma * float(qk(*times)), rel=1e-6)

    def test_odd_orders_empty(self, mult_quadratic, times):
        s = sde_expectation(Monomial.from_indices((0, 1)), mult_quadratic, 4, times=times)
        assert s.entry(1).is_zero() and s.entry(3).is_zero()

    def test_outputs_closed_and_tagged(self, general_model, times):
        s = sde_expectation(Monomial.from_indices((0, 1)), general_model, 4, times=times)
        for m in range(5):
            for rep in s.entry(m).terms():
                assert validate_diagram(rep, closed=True) == []
                for v, k in enumerate(rep.vertices):
                    if isinstance(k, Noise):
                        assert rep.in_degree(v) == 2

    def test_cyclic_pairings_dropped(self, mult_linear):
        # grandparent-grandchild pairing would close a directed loop; the
        # only surviving order-4 single-leg term is the double correction
        levels = solution_trees(mult_linear, 4)
        forest = assemble_product([levels], Monomial.from_indices((0,)), (4,))
        contracted = wick_contract(forest)
        assert len(contracted) == 1
        ((_, (rep, c)),) = contracted.items()
        assert c == Fraction(1, 4)
        kinds = [type(k).__name__ for k in rep.vertices]
        assert kinds.count("Correction") == 2


class TestLemma42Route:
    @pytest.mark.parametrize("indices", [(0,), (0, 1)])
    def test_structurally_equal_to_direct(self, additive_quadratic, indices):
        f = Monomial.from_indices(indices)
        direct = sde_expectation(f, additive_quadratic, 4)
        kernel_route = sde_expectation(f, additive_quadratic, 4, route="lemma42")
        for m in range(5):
            assert direct.entry(m) == kernel_route.entry(m), f"order {m}"

    def test_rejects_multiplicative(self, mult_linear):
        with pytest.raises(InvalidInput):
            sde_expectation(Monomial.from_indices((0,)), mult_linear, 2, route="lemma42")


class TestStratonovichGate:
    def test_requires_midpoint(self, mult_linear):
        require_stratonovich(mult_linear)
        with pytest.raises(ThetaMismatch):
            require_stratonovich(mult_linear.replace(theta0=Fraction(0)))


class TestCensus:
    def test_one_pair_one_factor(self):
        rows = contraction_pattern_census(1, 1)
        assert len(rows) == 1
        assert rows[0]["direct"] == 1

    def test_one_pair_two_factors(self):
        rows = contraction_pattern_census(1, 2)
        assert len(rows) == 3
        assert [r["direct"] for r in rows] == [1, 1, 1]

    def test_two_pairs_two_factors_match_direct(self):
        for row in contraction_pattern_census(2, 2):
            assert row["direct"] == row["multinomial"]
            assert row["direct"] == row["aggregate_form"]

    def test_multinomial_always_matches_direct(self):
        for n, k in [(1, 3), (2, 3), (3, 2), (4, 2), (2, 4)]:
            for row in contraction_pattern_census(n, k):
                assert row["direct"] == row["multinomial"]

    def test_bound(self):
        with pytest.raises(BoundExceeded):
            contraction_pattern_census(5, 2)


class TestIsserlisAgainstEngine:
    @pytest.mark.parametrize(
        "beta,order,indices",
        [
            ([0.0, 1.0], 2, (0,)),
            ([0.0, 1.0], 4, (0,)),
            ([1.0, 0.3, 0.2], 2, (0, 1)),
        ],
    )
    def test_matches_contraction_numerically(self, beta, order, indices, quad):
        model = make_model([], beta, Fraction(1, 2))
        times = (0.6, 0.9)[: max(indices) + 1] if indices else (0.6,)
        f = Monomial.from_indices(indices)
        levels = solution_trees(model, order)
        nlegs = len(indices)
        engine = sde_expectation(f, model, order, times=times)
        v_engine, e_engine = evaluate_sum(engine.entry(order), model, times, quad)
        a, b = model.chi.support

        def oracle(npts):
            est = 0.0
            from sdemsr.sde import _compositions

            for orders in _compositions(order, nlegs):
                forest = assemble_product([levels] * nlegs, f, orders)
                for rep in forest.terms():
                    fn, nslots = xi_integrand_from_diagram(rep, model, times)
                    delta = (b - a) / npts
                    grid = np.linspace(a, b, npts, endpoint=False) + delta / 2
                    est += isserlis_gamma_delta(fn, grid, nslots)
            return est

        coarse, fine = oracle(60), oracle(120)
        err_fine = abs(fine - v_engine)
        err_coarse = abs(coarse - v_engine)
        assert err_fine <= max(0.6 * err_coarse, 5e-4)
        assert fine == pytest.approx(v_engine, abs=0.05 * max(1.0, abs(v_engine)))
