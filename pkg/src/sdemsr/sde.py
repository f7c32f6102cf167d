"""Contraction-side engine.

The perturbative solution of the integral fixed-point equation is a graded
sum of rooted trees: each vertex carries one retarded in-edge, a cutoff
factor, and either a drift payload (k-th x-derivative, k = number of
children) or a noise-configuration leaf with the matching noise-amplitude
payload.  Expectations contract the leaves pairwise: a pair at two
non-adjacent vertices merges them into one noise vertex keeping both
in-edges, a pair at edge-adjacent vertices merges parent and child into a
correction-shaped vertex, the removed edge contributing the equal-time
kernel value 1/2.  That value is forced by consistency of the functional
algebra (the midpoint convention), so this engine does not accept an
override.  Pairings that close a directed cycle vanish and are dropped.
"""
from __future__ import annotations

import itertools
import math
from collections import Counter
from fractions import Fraction

from .diagrams import (
    Correction,
    Diagram,
    DiagramSeries,
    DiagramSum,
    Drift,
    External,
    Noise,
    Xi,
    validate_diagram,
)
from .errors import BoundExceeded, InvalidInput, OrderTooLarge, ThetaMismatch
from .model import ModelSpec
from .msr import Monomial, ensure_distinct_times, gamma_q_insert

EQUAL_TIME_KERNEL = Fraction(1, 2)  # forced; see module docstring


# ---------------------------------------------------------------------------
# solution trees
#
# A tree is (tag, children) with tag 'd' (drift) or 'x' (leaf-carrying);
# the payload derivative order equals len(children).  Trees are kept in a
# canonical form with sorted children.


def _tree_order(tree) -> int:
    tag, children = tree
    return 1 + sum(_tree_order(c) for c in children)


def _xi_count(tree) -> int:
    tag, children = tree
    return (1 if tag == "x" else 0) + sum(_xi_count(c) for c in children)


def _child_multisets(candidates, budget):
    """Multisets of candidate (tree, coeff, order) with orders summing to
    budget; yields (children_tuple, coefficient) with the 1/m! symmetry
    factors for repeated children."""

    def rec(idx, left):
        if left == 0:
            yield (), Fraction(1)
            return
        for j in range(idx, len(candidates)):
            tree, coeff, order = candidates[j]
            if order > left:
                continue
            max_m = left // order
            for m in range(1, max_m + 1):
                for rest, rc in rec(j + 1, left - m * order):
                    yield (tree,) * m + rest, coeff**m / math.factorial(m) * rc

    yield from rec(0, budget)


def solution_trees(model: ModelSpec, order: int, *, drift=True, noise=True):
    """Per-order dictionaries tree -> exact coefficient for the solution.

    Order 0 is the bare initial value (represented by the key None).  The
    order-n entry follows the recursion: a new root whose payload derivative
    order k equals the number of children, over all child multisets of total
    order n-1, with multinomial symmetry coefficients.
    """
    levels: list[dict] = [{None: Fraction(1)}]
    for n in range(1, order + 1):
        cur: dict = {}
        candidates = []
        for p in range(1, n):
            for tree, coeff in levels[p].items():
                candidates.append((tree, coeff, p))
        for children, coeff in _child_multisets(candidates, n - 1):
            k = len(children)
            children = tuple(sorted(children))
            if drift and not model.alpha.deriv(k).is_zero():
                key = ("d", children)
                cur[key] = cur.get(key, Fraction(0)) + coeff
            if noise and not model.beta.deriv(k).is_zero():
                key = ("x", children)
                cur[key] = cur.get(key, Fraction(0)) + coeff
        levels.append({t: c for t, c in cur.items() if c != 0})
    return levels


def _materialize(tree, slot: int, coeff: Fraction) -> Diagram:
    """Single-factor diagram: external leg at `slot` feeding the tree root."""
    kinds = [External(slot, 1)]
    edges = []
    if tree is not None:

        def emit(node, parent, parent_part):
            tag, children = node
            idx = len(kinds)
            kinds.append(Drift(len(children)) if tag == "d" else Xi(len(children)))
            edges.append((parent, parent_part, idx, 0))
            for ch in children:
                emit(ch, idx, 0)

        emit(tree, 0, 0)
    return Diagram(tuple(kinds), tuple(edges), coeff)


def perturb_solution(model: ModelSpec, order: int, *, max_order: int = 8, slot: int = 0):
    """Graded solution as diagram sums (one external leg at `slot`)."""
    if order > max_order:
        raise OrderTooLarge(f"order {order} exceeds bound {max_order}")
    levels = solution_trees(model, order)
    out = []
    for n in range(order + 1):
        out.append(DiagramSum(_materialize(t, slot, c) for t, c in levels[n].items()))
    return out


# ---------------------------------------------------------------------------
# pair contraction


def _pair_matchings(items):
    if not items:
        yield ()
        return
    first, rest = items[0], items[1:]
    for i, other in enumerate(rest):
        for tail in _pair_matchings(rest[:i] + rest[i + 1 :]):
            yield ((first, other),) + tail


def _merge_pairs(d: Diagram, matching):
    """Merge each matched leaf-vertex pair; None when a cycle appears."""
    factor = Fraction(1)
    edge_between = {}
    for s, _, t, _ in d.edges:
        edge_between[(s, t)] = True
    merged_of = {}
    merge_info = []
    for u, w in matching:
        if edge_between.get((w, u)):
            u, w = w, u
        adjacent = bool(edge_between.get((u, w)))
        if adjacent:
            factor *= EQUAL_TIME_KERNEL
        m_idx = len(merge_info)
        merge_info.append((u, w, adjacent))
        merged_of[u] = m_idx
        merged_of[w] = m_idx

    keep = [v for v in range(len(d.vertices)) if v not in merged_of]
    new_index = {v: i for i, v in enumerate(keep)}
    kinds = [d.vertices[v] for v in keep]
    for u, w, adjacent in merge_info:
        ku = d.vertices[u].out
        kw = d.vertices[w].out
        idx = len(kinds)
        if adjacent:
            kinds.append(Correction(kw, ku - 1))
        else:
            kinds.append(Noise(ku, kw))
        for v in (u, w):
            new_index[v] = idx

    def src_part(v):
        if v not in merged_of:
            return None
        u, w, adjacent = merge_info[merged_of[v]]
        if adjacent:
            return 0 if v == w else 1
        return 0 if v == u else 1

    def dst_slot(v):
        u, w, adjacent = merge_info[merged_of[v]]
        if adjacent:
            return 0
        return 0 if v == u else 1

    edges = []
    for s, ss, t, ts in d.edges:
        if s in merged_of and t in merged_of and merged_of[s] == merged_of[t]:
            continue  # the consumed parent-child edge
        ns = new_index[s]
        nss = src_part(s) if s in merged_of else ss
        nt = new_index[t]
        nts = dst_slot(t) if t in merged_of else ts
        edges.append((ns, nss, nt, nts))
    nd = Diagram(tuple(kinds), tuple(edges), d.coefficient * factor)
    if validate_diagram(nd):
        return None
    return nd


def wick_contract(assembled: DiagramSum) -> DiagramSum:
    """Sum over perfect pairings of the open leaves of every term.

    Terms with an odd leaf count contract to nothing; pairings that close a
    directed cycle vanish and are dropped.
    """
    out = []
    for rep in assembled.terms():
        leaves = [v for v, k in enumerate(rep.vertices) if isinstance(k, Xi)]
        if len(leaves) % 2:
            continue
        for matching in _pair_matchings(tuple(leaves)):
            nd = _merge_pairs(rep, matching)
            if nd is not None:
                out.append(nd)
    return DiagramSum(out)


def assemble_product(levels_per_leg, f: Monomial, orders) -> DiagramSum:
    """Forest for the product of per-leg solution terms at given orders."""
    ext = [External(s, x) for s, x, _ in f.legs]
    leg_slots = []
    for pos, (s, x, _) in enumerate(f.legs):
        leg_slots.extend([pos] * x)
    terms = [((), Fraction(1) * f.scalar)]
    for leg, p in enumerate(orders):
        new_terms = []
        for trees, coeff in terms:
            for tree, c in levels_per_leg[leg][p].items():
                new_terms.append((trees + (tree,), coeff * c))
        terms = new_terms
    out = []
    for trees, coeff in terms:
        kinds = list(ext)
        edges = []
        for leg, tree in enumerate(trees):
            if tree is None:
                continue
            base = leg_slots[leg]

            def emit(node, parent, parent_part):
                tag, children = node
                idx = len(kinds)
                kinds.append(Drift(len(children)) if tag == "d" else Xi(len(children)))
                edges.append((parent, parent_part, idx, 0))
                for ch in children:
                    emit(ch, idx, 0)

            emit(tree, base, 0)
        out.append((Diagram(tuple(kinds), tuple(edges)), coeff))
    return DiagramSum(out)


def sde_expectation(
    f: Monomial,
    model: ModelSpec,
    order: int,
    *,
    max_order: int = 8,
    times=None,
    route: str = "direct",
) -> DiagramSeries:
    """Expectation of an x-monomial through the contraction pipeline.

    route "direct" composes the solution expansion with the pair
    contraction; route "lemma42" (additive models only) expands the
    drift-only solution and inserts noise pairs with the x-independent
    kernel, which must produce a structurally identical series.
    """
    if f.aux_degree:
        raise InvalidInput("expectation takes x-monomials only")
    if order > max_order:
        raise OrderTooLarge(f"order {order} exceeds bound {max_order}")
    if times is not None:
        ensure_distinct_times(times)
    if route == "lemma42":
        return _lemma42_expectation(f, model, order)
    if route != "direct":
        raise InvalidInput(f"unknown route {route!r}")
    levels = solution_trees(model, order)
    nlegs = sum(x for _, x, _ in f.legs)
    levels_per_leg = [levels] * nlegs
    series = DiagramSeries(order)
    for m in range(order + 1):
        for orders in _compositions(m, nlegs):
            forest = assemble_product(levels_per_leg, f, orders)
            contracted = wick_contract(forest)
            for _, (rep, c) in contracted.items():
                series.add_term(rep, c)
    return series


def _compositions(total, parts):
    if parts == 0:
        if total == 0:
            yield ()
        return
    for head in range(total + 1):
        for rest in _compositions(total - head, parts - 1):
            yield (head,) + rest


def _lemma42_expectation(f: Monomial, model: ModelSpec, order: int) -> DiagramSeries:
    if not model.beta.is_one():
        raise InvalidInput("the kernel-insertion route applies to unit noise amplitude")
    levels = solution_trees(model, order, noise=False)
    nlegs = sum(x for _, x, _ in f.legs)
    levels_per_leg = [levels] * nlegs
    series = DiagramSeries(order)
    for m_sk in range(order + 1):
        skeleton = DiagramSum.zero()
        for orders in _compositions(m_sk, nlegs):
            skeleton = skeleton + assemble_product(levels_per_leg, f, orders)
        if skeleton.is_zero():
            continue
        for n_pairs in range(0, (order - m_sk) // 2 + 1):
            inserted = gamma_q_insert(skeleton, model, n_pairs) if n_pairs else skeleton
            for _, (rep, c) in inserted.items():
                if not validate_diagram(rep, closed=True):
                    series.add_term(rep, c)
    return series


def require_stratonovich(model: ModelSpec) -> None:
    """The contraction side fixes the midpoint convention; comparisons at any
    other convention parameter are refused."""
    if model.theta0 != Fraction(1, 2):
        raise ThetaMismatch(f"contraction-side comparison needs theta0 = 1/2, got {model.theta0}")


# ---------------------------------------------------------------------------
# pairing-pattern census


def contraction_pattern_census(n: int, k: int):
    """Distributions of n second-derivative factors over k product factors.

    Each factor either acts inside one slot i (type ('m', i)) or splits
    across two slots i < l (type ('n', i, l)).  Returns one row per
    cardinality signature with the direct enumeration count, the multinomial
    closed form n!/prod(counts!), and the within-slot aggregate form
    n!/(prod m_i! * prod ntilde_ii!); the last two agree whenever at most
    one cross type is active per lower slot (always for k <= 2).
    """
    if 2 * n > 8 or k > 4:
        raise BoundExceeded(f"census bounded at 2n <= 8, k <= 4; got n={n}, k={k}")
    types = [("m", i) for i in range(1, k + 1)]
    types += [("n", i, l) for i in range(1, k + 1) for l in range(i + 1, k + 1)]
    groups: dict = {}
    for assignment in itertools.product(types, repeat=n):
        sig = tuple(sorted(Counter(assignment).items()))
        groups[sig] = groups.get(sig, 0) + 1
    rows = []
    for sig, direct in sorted(groups.items()):
        counts = dict(sig)
        multinomial = math.factorial(n)
        for c in counts.values():
            multinomial //= math.factorial(c)
        ntilde = Counter()
        m_fact = 1
        for typ, c in counts.items():
            if typ[0] == "m":
                m_fact *= math.factorial(c)
            else:
                ntilde[typ[1]] += c
        aggregate = math.factorial(n) // m_fact
        for c in ntilde.values():
            aggregate //= math.factorial(c)
        rows.append({"signature": sig, "direct": direct, "multinomial": multinomial, "aggregate_form": aggregate})
    return rows


# ---------------------------------------------------------------------------
# blooming


def unbloom_candidates(tree):
    """Trees obtained by deleting one childless child (undoing one bloom)."""
    tag, children = tree
    out = []
    for i, ch in enumerate(children):
        ctag, cchildren = ch
        if not cchildren:
            rest = children[:i] + children[i + 1 :]
            out.append((tag, tuple(sorted(rest))))
        for sub in unbloom_candidates(ch):
            out.append((tag, tuple(sorted(children[:i] + (sub,) + children[i + 1 :]))))
    return out
