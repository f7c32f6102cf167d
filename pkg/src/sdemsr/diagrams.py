"""Directed acyclic multigraphs for the perturbative expansions.

A diagram has external time-labeled vertices and internal vertices of four
kinds.  Internal vertices own "parts" (source slots) whose out-counts record
how many derivative hits the payload took, and in-slots that edges point
into.  Edges are (src_vertex, src_slot, dst_vertex, dst_slot) and always run
from the later-time side to the earlier-time side, one retarded kernel
factor per edge.

Analytic payloads (drift vertex with d out-edges carries the d-th x-derivative
of the drift polynomial, and so on) are evaluated elsewhere; this module owns
structure only: validation, canonical forms, automorphism counting, and the
formal linear combinations with exact rational coefficients.

Two canonical forms exist.  The labeled key identifies diagrams up to
relabeling internal vertices.  The class key additionally swaps the two
slots of any noise vertex together with all attached edges and out-counts;
slot-labeled variants of one class produce the same analytic value, and a
class has 2**c representatives where c counts noise vertices whose two
in-edges come from distinct sources.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction


class DiagramError(ValueError):
    """Structural violation in a diagram."""


class CyclicDiagram(DiagramError):
    pass


class SelfLoop(DiagramError):
    pass


class SlotOverflow(DiagramError):
    pass


class BadGrade(DiagramError):
    pass


class TooLarge(DiagramError):
    pass


# ---------------------------------------------------------------------------
# vertex kinds


@dataclass(frozen=True)
class External:
    """Observation-time vertex: slot indexes the time list.

    legs counts x-factors (edge sources), xt_legs counts auxiliary-field
    factors (edge targets).  Engine outputs built from plain x-monomials
    always have xt_legs == 0.
    """

    slot: int
    legs: int
    xt_legs: int = 0


@dataclass(frozen=True)
class Drift:
    """chi * (d/dx)^out alpha payload; one in-slot, one part."""

    out: int


@dataclass(frozen=True)
class Noise:
    """sigma * chi^2 * beta_{out1} * beta_{out2} payload; two in-slots."""

    out1: int
    out2: int


@dataclass(frozen=True)
class Correction:
    """sigma * chi^2 * beta_{out1} * beta1_{out2} payload; one in-slot.

    Part 0 is based on beta, part 1 on its first x-derivative, so the
    analytic derivative orders are (out1, 1 + out2).
    """

    out1: int
    out2: int


@dataclass(frozen=True)
class Xi:
    """Solution-tree vertex carrying one open noise-configuration leaf.

    Payload chi * sqrt(sigma) * beta_{out}; disappears under contraction.
    """

    out: int


VertexKind = External | Drift | Noise | Correction | Xi

Edge = tuple[int, int, int, int]

_KIND_CODE = {External: 0, Drift: 1, Noise: 2, Correction: 3, Xi: 4}
_CHI_POWER = {External: 0, Drift: 1, Noise: 2, Correction: 2, Xi: 1}


def n_parts(kind: VertexKind) -> int:
    if isinstance(kind, (Noise, Correction)):
        return 2
    return 1


def part_outs(kind: VertexKind) -> tuple[int, ...]:
    if isinstance(kind, External):
        return (kind.legs,)
    if isinstance(kind, (Drift, Xi)):
        return (kind.out,)
    return (kind.out1, kind.out2)


def in_capacity(kind: VertexKind, slot: int) -> int:
    """Maximum in-edges per target slot."""
    if isinstance(kind, External):
        return kind.xt_legs if slot == 0 else 0
    if isinstance(kind, Noise):
        return 1 if slot in (0, 1) else 0
    return 1 if slot == 0 else 0


def n_in_slots(kind: VertexKind) -> int:
    if isinstance(kind, Noise):
        return 2
    return 1


# ---------------------------------------------------------------------------
# diagram


@dataclass(frozen=True)
class Diagram:
    """Immutable diagram with an exact rational coefficient."""

    vertices: tuple[VertexKind, ...]
    edges: tuple[Edge, ...]
    coefficient: Fraction = Fraction(1)

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple(sorted(self.edges)))
        object.__setattr__(self, "coefficient", Fraction(self.coefficient))

    @property
    def chi_order(self) -> int:
        return sum(_CHI_POWER[type(k)] for k in self.vertices)

    def internal_indices(self) -> list[int]:
        return [i for i, k in enumerate(self.vertices) if not isinstance(k, External)]

    def external_indices(self) -> list[int]:
        return [i for i, k in enumerate(self.vertices) if isinstance(k, External)]

    def out_degree(self, v: int) -> int:
        return sum(1 for e in self.edges if e[0] == v)

    def in_degree(self, v: int) -> int:
        return sum(1 for e in self.edges if e[2] == v)

    def with_coefficient(self, c) -> "Diagram":
        return Diagram(self.vertices, self.edges, Fraction(c))

    def xi_count(self) -> int:
        return sum(1 for k in self.vertices if isinstance(k, Xi))

    def unconsumed_legs(self, v: int) -> int:
        k = self.vertices[v]
        if not isinstance(k, External):
            return 0
        return k.legs - self.out_degree(v)


def empty_diagram(leg_counts, coefficient=Fraction(1)) -> Diagram:
    """Order-0 diagram: external vertices only, no edges.

    leg_counts maps slot -> x-leg multiplicity.
    """
    vs = tuple(External(slot, legs) for slot, legs in sorted(leg_counts.items()))
    return Diagram(vs, (), Fraction(coefficient))


# ---------------------------------------------------------------------------
# validation


def _has_cycle(n, edges) -> bool:
    adj = {i: [] for i in range(n)}
    indeg = [0] * n
    for s, _, d, _ in edges:
        adj[s].append(d)
        indeg[d] += 1
    stack = [i for i in range(n) if indeg[i] == 0]
    seen = 0
    while stack:
        v = stack.pop()
        seen += 1
        for w in adj[v]:
            indeg[w] -= 1
            if indeg[w] == 0:
                stack.append(w)
    return seen != n


def validate_diagram(d: Diagram, closed: bool = False, declared_order: int | None = None) -> list[str]:
    """Return a list of invariant violations (empty means OK).

    With closed=True additionally require every internal in-slot to be
    filled (all auxiliary-field legs consumed) and externals to carry no
    auxiliary legs.
    """
    bad = []
    n = len(d.vertices)
    for i, k in enumerate(d.vertices):
        if isinstance(k, External):
            if k.legs < 0 or k.xt_legs < 0:
                bad.append(f"NegativeLegs: v{i}")
        else:
            if any(o < 0 for o in part_outs(k)):
                bad.append(f"NegativeOut: v{i}")
    slot_in = {}
    out_per_part = {}
    for e in d.edges:
        s, ss, t, ts = e
        if not (0 <= s < n and 0 <= t < n):
            bad.append(f"DanglingEdge: {e}")
            continue
        if s == t:
            bad.append(f"SelfLoop: {e}")
            continue
        if ss >= n_parts(d.vertices[s]):
            bad.append(f"BadSourceSlot: {e}")
        cap = in_capacity(d.vertices[t], ts)
        if cap == 0:
            bad.append(f"BadTargetSlot: {e}")
        slot_in[(t, ts)] = slot_in.get((t, ts), 0) + 1
        out_per_part[(s, ss)] = out_per_part.get((s, ss), 0) + 1
    for (t, ts), cnt in slot_in.items():
        if cnt > in_capacity(d.vertices[t], ts):
            bad.append(f"SlotOverflow: v{t}.{ts} has {cnt} in-edges")
    for i, k in enumerate(d.vertices):
        if isinstance(k, External):
            if d.out_degree(i) > k.legs:
                bad.append(f"SlotOverflow: external v{i} exceeds legs")
        else:
            outs = part_outs(k)
            for p, want in enumerate(outs):
                got = out_per_part.get((i, p), 0)
                if got != want:
                    bad.append(f"BadOutCount: v{i}.{p} declares {want}, has {got}")
    if not any(b.startswith(("DanglingEdge", "SelfLoop")) for b in bad):
        if _has_cycle(n, d.edges):
            bad.append("CyclicDiagram")
    if declared_order is not None and declared_order != d.chi_order:
        bad.append(f"BadGrade: declared {declared_order}, actual {d.chi_order}")
    if closed:
        for i, k in enumerate(d.vertices):
            if isinstance(k, External):
                if k.xt_legs != 0:
                    bad.append(f"OpenAuxLeg: external v{i}")
            elif isinstance(k, Xi):
                bad.append(f"OpenXiLeaf: v{i}")
            else:
                for ts in range(n_in_slots(k)):
                    if slot_in.get((i, ts), 0) != 1:
                        bad.append(f"UnfilledSlot: v{i}.{ts}")
    return bad


def check_valid(d: Diagram, closed: bool = False) -> None:
    bad = validate_diagram(d, closed=closed)
    if bad:
        first = bad[0]
        if first.startswith("CyclicDiagram"):
            raise CyclicDiagram("; ".join(bad))
        if first.startswith("SelfLoop"):
            raise SelfLoop("; ".join(bad))
        if first.startswith("SlotOverflow"):
            raise SlotOverflow("; ".join(bad))
        if first.startswith("BadGrade"):
            raise BadGrade("; ".join(bad))
        raise DiagramError("; ".join(bad))


# ---------------------------------------------------------------------------
# canonical forms


def _kind_tuple(kind: VertexKind, flip: bool = False):
    code = _KIND_CODE[type(kind)]
    if isinstance(kind, External):
        return (code, kind.slot, kind.legs, kind.xt_legs)
    if isinstance(kind, Noise) and flip:
        return (code, kind.out2, kind.out1)
    return (code,) + part_outs(kind)


def _flip_invariant_color(kind: VertexKind):
    code = _KIND_CODE[type(kind)]
    if isinstance(kind, External):
        return (code, kind.slot, kind.legs, kind.xt_legs)
    if isinstance(kind, Noise):
        return (code,) + tuple(sorted((kind.out1, kind.out2)))
    return (code,) + part_outs(kind)


def _refine_colors(d: Diagram):
    """Weisfeiler-Leman style color refinement, invariant under internal
    relabeling and noise slot swaps.  Externals are pinned by slot."""
    n = len(d.vertices)
    colors = [_flip_invariant_color(k) for k in d.vertices]
    for _ in range(n):
        sig = []
        for v in range(n):
            outs = sorted(colors[e[2]] for e in d.edges if e[0] == v)
            ins = sorted(colors[e[0]] for e in d.edges if e[2] == v)
            sig.append((colors[v], tuple(outs), tuple(ins)))
        if sig == colors:
            break
        colors = sig
    return colors


def _consistent_orderings(d: Diagram, max_internal=12):
    """Yield total orderings of internal vertices grouped by refined color."""
    internals = d.internal_indices()
    if len(internals) > max_internal:
        raise TooLarge(f"{len(internals)} internal vertices exceeds canonicalization bound")
    colors = _refine_colors(d)
    blocks = {}
    for v in internals:
        blocks.setdefault(colors[v], []).append(v)
    keys = sorted(blocks.keys(), key=repr)
    per_block = [list(itertools.permutations(blocks[k])) for k in keys]
    for combo in itertools.product(*per_block):
        order = [v for block in combo for v in block]
        yield order


def _encode(d: Diagram, order, flips):
    """Byte encoding under a given internal ordering and noise-flip set."""
    pos = {}
    ext = sorted(d.external_indices(), key=lambda v: d.vertices[v].slot)
    for i, v in enumerate(ext):
        pos[v] = i
    for j, v in enumerate(order):
        pos[v] = len(ext) + j
    kinds = [None] * len(d.vertices)
    for v, p in pos.items():
        kinds[p] = _kind_tuple(d.vertices[v], flip=v in flips)
    edges = []
    for s, ss, t, ts in d.edges:
        if s in flips and isinstance(d.vertices[s], Noise):
            ss = 1 - ss
        if t in flips and isinstance(d.vertices[t], Noise):
            ts = 1 - ts
        edges.append((pos[s], ss, pos[t], ts))
    return repr((tuple(kinds), tuple(sorted(edges)))).encode()


def labeled_key(d: Diagram) -> bytes:
    """Canonical key up to internal relabeling only (slots kept)."""
    best = None
    for order in _consistent_orderings(d):
        enc = _encode(d, order, frozenset())
        if best is None or enc < best:
            best = enc
    return best


def canonical_key(d: Diagram) -> bytes:
    """Canonical key up to relabeling and noise slot swaps.

    Two diagrams get equal keys exactly when their analytic integrands
    agree as functions of the cutoff and the payload derivatives.
    """
    noise = [v for v in d.internal_indices() if isinstance(d.vertices[v], Noise)]
    best = None
    for order in _consistent_orderings(d):
        for r in range(len(noise) + 1):
            for subset in itertools.combinations(noise, r):
                enc = _encode(d, order, frozenset(subset))
                if best is None or enc < best:
                    best = enc
    return best


def automorphism_count(d: Diagram, bound: int = 8) -> int:
    """Order of the group of kind- and edge-preserving permutations of
    internal vertices (externals fixed, slots preserved)."""
    bad = validate_diagram(d)
    if bad:
        raise DiagramError("; ".join(bad))
    internals = d.internal_indices()
    if len(internals) > bound:
        raise TooLarge(f"{len(internals)} internal vertices exceeds bound {bound}")
    colors = _refine_colors(d)
    blocks = {}
    for v in internals:
        blocks.setdefault((repr(colors[v]), _kind_tuple(d.vertices[v])), []).append(v)
    edge_set = set(d.edges)
    count = 0
    per_block = [itertools.permutations(b) for b in blocks.values()]
    block_vertices = [b for b in blocks.values()]
    for combo in itertools.product(*per_block):
        mapping = {v: v for v in d.external_indices()}
        for orig, perm in zip(block_vertices, combo):
            for a, b in zip(orig, perm):
                mapping[a] = b
        ok = True
        for s, ss, t, ts in d.edges:
            if (mapping[s], ss, mapping[t], ts) not in edge_set:
                ok = False
                break
        if ok:
            count += 1
    return count


def class_doubling_exponent(d: Diagram) -> int:
    """Number of noise vertices whose two in-edges come from two distinct
    source slots; the class of the diagram has 2**c labeled representatives."""
    bad = validate_diagram(d)
    if bad:
        raise DiagramError("; ".join(bad))
    c = 0
    for v, k in enumerate(d.vertices):
        if not isinstance(k, Noise):
            continue
        sources = [(e[0], e[1]) for e in d.edges if e[2] == v]
        if len(sources) == 2 and sources[0] != sources[1]:
            c += 1
    return c


def slot_variants(d: Diagram):
    """All labeled diagrams reachable by per-noise-vertex slot swaps."""
    noise = [v for v in d.internal_indices() if isinstance(d.vertices[v], Noise)]
    out = []
    for r in range(len(noise) + 1):
        for subset in itertools.combinations(noise, r):
            flips = frozenset(subset)
            kinds = list(d.vertices)
            for v in flips:
                k = kinds[v]
                kinds[v] = Noise(k.out2, k.out1)
            edges = []
            for s, ss, t, ts in d.edges:
                if s in flips and isinstance(d.vertices[s], Noise):
                    ss = 1 - ss
                if t in flips and isinstance(d.vertices[t], Noise):
                    ts = 1 - ts
                edges.append((s, ss, t, ts))
            out.append(Diagram(tuple(kinds), tuple(edges), d.coefficient))
    return out


# ---------------------------------------------------------------------------
# sums


class DiagramSum:
    """Finite formal linear combination of diagrams, collected by class key.

    Zero-coefficient terms are dropped; two diagrams related by internal
    relabeling or noise slot swaps share one term.  Instances are immutable
    in use: all operations return new sums.
    """

    __slots__ = ("_terms",)

    def __init__(self, terms=()):
        collected: dict[bytes, tuple[Diagram, Fraction]] = {}
        for item in terms:
            if isinstance(item, Diagram):
                d, c = item, item.coefficient
            else:
                d, c = item
                c = Fraction(c)
            key = canonical_key(d)
            if key in collected:
                rep, acc = collected[key]
                collected[key] = (rep, acc + c)
            else:
                collected[key] = (d.with_coefficient(c), c)
        self._terms = {k: (rep.with_coefficient(c), c) for k, (rep, c) in collected.items() if c != 0}

    @staticmethod
    def zero() -> "DiagramSum":
        return DiagramSum()

    def items(self):
        return sorted(self._terms.items())

    def terms(self):
        return [rep for _, (rep, _) in self.items()]

    def coefficient(self, d: Diagram) -> Fraction:
        key = canonical_key(d)
        if key in self._terms:
            return self._terms[key][1]
        return Fraction(0)

    def __len__(self):
        return len(self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    def __add__(self, other: "DiagramSum") -> "DiagramSum":
        items = [(rep, c) for _, (rep, c) in self._terms.items()]
        items += [(rep, c) for _, (rep, c) in other._terms.items()]
        return DiagramSum(items)

    def scale(self, factor) -> "DiagramSum":
        f = Fraction(factor)
        return DiagramSum((rep, c * f) for _, (rep, c) in self._terms.items())

    def __eq__(self, other):
        if not isinstance(other, DiagramSum):
            return NotImplemented
        if set(self._terms) != set(other._terms):
            return False
        return all(self._terms[k][1] == other._terms[k][1] for k in self._terms)

    def __hash__(self):
        return hash(tuple(sorted((k, c) for k, (_, c) in self._terms.items())))

    def diff(self, other: "DiagramSum") -> list[str]:
        """Human-readable description of differing terms."""
        out = []
        keys = set(self._terms) | set(other._terms)
        for k in sorted(keys):
            a = self._terms.get(k)
            b = other._terms.get(k)
            if a is None:
                out.append(f"only right (coeff {b[1]}):\n{to_text(b[0])}")
            elif b is None:
                out.append(f"only left (coeff {a[1]}):\n{to_text(a[0])}")
            elif a[1] != b[1]:
                out.append(f"coeff {a[1]} != {b[1]} for:\n{to_text(a[0])}")
        return out

    def by_order(self) -> dict[int, "DiagramSum"]:
        split: dict[int, list] = {}
        for _, (rep, c) in self.items():
            split.setdefault(rep.chi_order, []).append((rep, c))
        return {m: DiagramSum(v) for m, v in split.items()}

    def __repr__(self):
        return f"DiagramSum({len(self._terms)} terms)"


def collect(s: DiagramSum) -> DiagramSum:
    """Re-collect a sum (idempotent; sums are collected on construction)."""
    return DiagramSum((rep, c) for _, (rep, c) in s.items())


# ---------------------------------------------------------------------------
# text serialization


def _kind_to_text(k: VertexKind) -> str:
    if isinstance(k, External):
        return f"ext({k.slot},{k.legs},{k.xt_legs})"
    if isinstance(k, Drift):
        return f"drift({k.out})"
    if isinstance(k, Noise):
        return f"noise({k.out1},{k.out2})"
    if isinstance(k, Correction):
        return f"corr({k.out1},{k.out2})"
    return f"xi({k.out})"


def _kind_from_text(s: str) -> VertexKind:
    name, _, rest = s.partition("(")
    args = [int(a) for a in rest.rstrip(")").split(",") if a != ""]
    if name == "ext":
        return External(*args)
    if name == "drift":
        return Drift(*args)
    if name == "noise":
        return Noise(*args)
    if name == "corr":
        return Correction(*args)
    if name == "xi":
        return Xi(*args)
    raise DiagramError(f"unknown vertex kind {name!r}")


def to_text(d: Diagram) -> str:
    """Line-based debug form; bit-exact round trip with from_text."""
    lines = [f"c {d.coefficient.numerator}/{d.coefficient.denominator}"]
    for i, k in enumerate(d.vertices):
        lines.append(f"v{i} {_kind_to_text(k)}")
    for s, ss, t, ts in d.edges:
        lines.append(f"e {s}.{ss} -> {t}.{ts}")
    return "\n".join(lines)


def from_text(text: str) -> Diagram:
    coeff = Fraction(1)
    kinds: dict[int, VertexKind] = {}
    edges = []
    for raw in text.strip().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("c "):
            num, _, den = line[2:].partition("/")
            coeff = Fraction(int(num), int(den or "1"))
        elif line.startswith("v"):
            head, _, kind = line.partition(" ")
            kinds[int(head[1:])] = _kind_from_text(kind.strip())
        elif line.startswith("e "):
            src, _, dst = line[2:].partition("->")
            s, ss = src.strip().split(".")
            t, ts = dst.strip().split(".")
            edges.append((int(s), int(ss), int(t), int(ts)))
        else:
            raise DiagramError(f"bad line {line!r}")
    vertices = tuple(kinds[i] for i in range(len(kinds)))
    return Diagram(vertices, tuple(edges), coeff)


def sum_to_text(s: DiagramSum) -> str:
    blocks = [to_text(rep) for _, (rep, _) in s.items()]
    return "\n\n".join(blocks) + ("\n" if blocks else "")


def sum_from_text(text: str) -> DiagramSum:
    blocks = [b for b in text.split("\n\n") if b.strip()]
    return DiagramSum(from_text(b) for b in blocks)


class DiagramSeries:
    """Truncated formal power series in the cutoff with DiagramSum entries."""

    __slots__ = ("orders", "truncation")

    def __init__(self, truncation: int, entries=None):
        self.truncation = truncation
        self.orders: dict[int, DiagramSum] = {}
        for m, s in (entries or {}).items():
            if m <= truncation and not s.is_zero():
                self.orders[m] = s

    def entry(self, m: int) -> DiagramSum:
        return self.orders.get(m, DiagramSum.zero())

    def add_term(self, d: Diagram, c) -> None:
        m = d.chi_order
        if m > self.truncation:
            return
        self.orders[m] = self.entry(m) + DiagramSum([(d, c)])
        if self.orders[m].is_zero():
            del self.orders[m]

    def __eq__(self, other):
        if not isinstance(other, DiagramSeries):
            return NotImplemented
        keys = set(self.orders) | set(other.orders)
        return all(self.entry(m) == other.entry(m) for m in keys)

    def __repr__(self):
        sizes = {m: len(s) for m, s in sorted(self.orders.items())}
        return f"DiagramSeries(N={self.truncation}, terms={sizes})"


def to_dot(d: Diagram, name="diagram") -> str:
    """Graphviz form for drawing."""
    lines = [f"digraph {name} {{", "  rankdir=LR;"]
    for i, k in enumerate(d.vertices):
        if isinstance(k, External):
            shape, label = "circle", f"t{k.slot}"
            if k.legs != 1 or k.xt_legs:
                label += f" ({k.legs}x,{k.xt_legs}~)"
        else:
            shape = "box"
            label = _kind_to_text(k)
        lines.append(f'  v{i} [shape={shape}, label="{label}"];')
    for s, ss, t, ts in d.edges:
        lines.append(f'  v{s} -> v{t} [label="{ss}->{ts}"];')
    lines.append("}")
    return "\n".join(lines)
