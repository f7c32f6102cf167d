import itertools
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from sdemsr.diagrams import (
    Correction,
    Diagram,
    DiagramSum,
    Drift,
    External,
    Noise,
    Xi,
    automorphism_count,
    canonical_key,
    class_doubling_exponent,
    collect,
    from_text,
    labeled_key,
    slot_variants,
    sum_from_text,
    sum_to_text,
    to_dot,
    to_text,
    validate_diagram,
    TooLarge,
)


def chain(*outs):
    """External leg feeding a drift chain with the given out-counts."""
    kinds = [External(0, 1)] + [Drift(o) for o in outs]
    edges = [(i, 0, i + 1, 0) for i in range(len(outs))]
    return Diagram(tuple(kinds), tuple(edges))


def test_smallest_closed_diagram_is_valid():
    d = chain(0)
    assert validate_diagram(d, closed=True) == []
    assert d.chi_order == 1


def test_cycle_is_flagged():
    d = Diagram((Drift(1), Drift(1)), ((0, 0, 1, 0), (1, 0, 0, 0)))
    assert any(v.startswith("CyclicDiagram") for v in validate_diagram(d))


def test_self_loop_flagged():
    d = Diagram((External(0, 1), Drift(1)), ((1, 0, 1, 0), (0, 0, 1, 0)))
    assert any(v.startswith("SelfLoop") for v in validate_diagram(d))


def test_slot_overflow_flagged():
    # two in-edges on the same noise slot
    d = Diagram(
        (External(0, 1), External(1, 1), Noise(0, 0)),
        ((0, 0, 2, 0), (1, 0, 2, 0)),
    )
    assert any(v.startswith("SlotOverflow") for v in validate_diagram(d))


def test_out_count_consistency_flagged():
    d = Diagram((External(0, 1), Drift(2)), ((0, 0, 1, 0),))
    assert any(v.startswith("BadOutCount") for v in validate_diagram(d))


def test_declared_grade_mismatch():
    d = chain(0)
    assert any(v.startswith("BadGrade") for v in validate_diagram(d, declared_order=2))
    assert validate_diagram(d, declared_order=1) == []


def test_canonical_key_relabeling_invariance():
    kinds = (External(0, 1), Drift(1), Drift(0))
    d1 = Diagram(kinds, ((0, 0, 1, 0), (1, 0, 2, 0)))
    # same chain with the two internal vertices swapped
    d2 = Diagram((External(0, 1), Drift(0), Drift(1)), ((0, 0, 2, 0), (2, 0, 1, 0)))
    assert canonical_key(d1) == canonical_key(d2)
    assert labeled_key(d1) == labeled_key(d2)


def test_canonical_key_distinguishes_shapes():
    branch = Diagram(
        (External(0, 1), Drift(2), Drift(0), Drift(0)),
        ((0, 0, 1, 0), (1, 0, 2, 0), (1, 0, 3, 0)),
    )
    long_chain = chain(1, 1, 0)
    assert canonical_key(branch) != canonical_key(long_chain)


def test_slot_swap_quotient():
    # noise vertex fed by two distinct externals; swapping which slot each
    # edge lands on changes the labeled form but not the class
    base = Diagram(
        (External(0, 1), External(1, 1), Noise(0, 0)),
        ((0, 0, 2, 0), (1, 0, 2, 1)),
    )
    flipped = Diagram(
        (External(0, 1), External(1, 1), Noise(0, 0)),
        ((0, 0, 2, 1), (1, 0, 2, 0)),
    )
    assert canonical_key(base) == canonical_key(flipped)
    assert labeled_key(base) != labeled_key(flipped)
    assert class_doubling_exponent(base) == 1
    assert len({labeled_key(v) for v in slot_variants(base)}) == 2


def test_class_doubling_same_source():
    # both in-edges from the same part: no doubling
    d = Diagram(
        (External(0, 1), Drift(2), Noise(0, 0)),
        ((0, 0, 1, 0), (1, 0, 2, 0), (1, 0, 2, 1)),
    )
    assert class_doubling_exponent(d) == 0
    assert len({labeled_key(v) for v in slot_variants(d)}) == 1


def test_automorphism_count_examples():
    assert automorphism_count(chain(1, 0)) == 1
    branch = Diagram(
        (External(0, 1), Drift(2), Drift(0), Drift(0)),
        ((0, 0, 1, 0), (1, 0, 2, 0), (1, 0, 3, 0)),
    )
    assert automorphism_count(branch) == 2
    # noise feeding two identical leaf noise vertices
    d = Diagram(
        (External(0, 1), External(1, 1), Noise(2, 2), Noise(0, 0), Noise(0, 0)),
        ((0, 0, 2, 0), (1, 0, 2, 1), (2, 0, 3, 0), (2, 0, 4, 0), (2, 1, 3, 1), (2, 1, 4, 1)),
    )
    assert automorphism_count(d) == 2


def test_automorphism_bound():
    kinds = (External(0, 1),) + tuple(Drift(1) for _ in range(8)) + (Drift(0),)
    edges = tuple((i, 0, i + 1, 0) for i in range(9))
    with pytest.raises(TooLarge):
        automorphism_count(Diagram(kinds, edges), bound=8)


def naive_automorphisms(d):
    """Independent brute force over all internal permutations."""
    internals = d.internal_indices()
    edge_set = set(d.edges)
    count = 0
    for perm in itertools.permutations(internals):
        mapping = {v: v for v in d.external_indices()}
        mapping.update(dict(zip(internals, perm)))
        if any(d.vertices[v] != d.vertices[mapping[v]] for v in internals):
            continue
        if all((mapping[s], ss, mapping[t], ts) in edge_set for s, ss, t, ts in d.edges):
            count += 1
    return count


def test_automorphisms_match_naive_on_engine_output(additive_quadratic):
    from sdemsr.msr import Monomial, msr_expectation

    series = msr_expectation(Monomial.from_indices((0, 1)), additive_quadratic, 3)
    seen = 0
    for m in range(4):
        for rep in series.entry(m).terms():
            assert automorphism_count(rep) == naive_automorphisms(rep)
            seen += 1
    assert seen > 5


def test_collect_merges_and_cancels():
    d = chain(1, 0)
    two = DiagramSum([(d, Fraction(1)), (d, Fraction(1))])
    assert two.coefficient(d) == 2
    gone = DiagramSum([(d, Fraction(1)), (d, Fraction(-1))])
    assert gone.is_zero()
    assert collect(two) == two


def test_collect_of_labeled_copies_gives_class_weight():
    """Feeding all labeled relabelings and slot variants of one two-vertex
    noise diagram with weight (1/2)^n / n! reproduces 2^(c-n) / Aut."""
    d = Diagram(
        (External(0, 1), External(1, 1), Noise(1, 1), Noise(0, 0)),
        ((0, 0, 2, 0), (1, 0, 2, 1), (2, 0, 3, 0), (2, 1, 3, 1)),
    )
    n = 2
    labeled = []
    for variant in slot_variants(d):
        internals = variant.internal_indices()
        for perm in itertools.permutations(internals):
            mapping = {v: v for v in variant.external_indices()}
            mapping.update(dict(zip(internals, perm)))
            kinds = [None] * len(variant.vertices)
            for old, new in mapping.items():
                kinds[new] = variant.vertices[old]
            edges = tuple((mapping[s], ss, mapping[t], ts) for s, ss, t, ts in variant.edges)
            labeled.append(Diagram(tuple(kinds), edges))
    uniq = {}
    for g in labeled:
        uniq[repr((g.vertices, g.edges))] = g
    weight = Fraction(1, 2) ** n / 2  # template weights / n!
    total = DiagramSum((g, weight) for g in uniq.values())
    assert len(total) == 1
    c = class_doubling_exponent(d)
    aut = automorphism_count(d)
    assert total.coefficient(d) == Fraction(2) ** (c - n) / aut


@given(st.fractions(), st.fractions())
def test_sum_linearity(a, b):
    d1 = chain(0)
    d2 = chain(1, 0)
    s = DiagramSum([(d1, a)]) + DiagramSum([(d1, b), (d2, b)])
    assert s.coefficient(d1) == a + b
    assert s.coefficient(d2) == b


def test_text_round_trip():
    d = Diagram(
        (External(0, 2, 1), Drift(1), Noise(0, 1), Correction(1, 0), Xi(0)),
        ((0, 0, 1, 0), (1, 0, 2, 0), (2, 1, 3, 0), (3, 0, 4, 0), (3, 1, 2, 1)),
        Fraction(-3, 7),
    )
    d2 = from_text(to_text(d))
    assert d2 == d
    assert to_text(d2) == to_text(d)


def test_sum_text_round_trip():
    s = DiagramSum([(chain(0), Fraction(1, 3)), (chain(1, 0), Fraction(2))])
    s2 = sum_from_text(sum_to_text(s))
    assert s2 == s


def test_dot_export_mentions_all_vertices():
    d = chain(1, 0)
    dot = to_dot(d)
    assert dot.startswith("digraph")
    for i in range(3):
        assert f"v{i}" in dot
