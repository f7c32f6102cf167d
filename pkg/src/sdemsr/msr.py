"""Response-field expansion engine.

Expectation values of x-monomials are graded sums of closed diagrams built
from an interacting vertex with three templates: a drift insertion (weight 1,
first order in the cutoff, one auxiliary leg), a noise pair insertion
(weight 1/2, second order, two auxiliary legs) and an equal-time correction
insertion (weight theta0, second order, one auxiliary leg, payload based on
beta * beta').  The deformation map that contracts auxiliary legs against
x-dependence skips same-vertex pairs; the Ito/Stratonovich choice enters
only through the correction weight.

Printed sources disagree on the noise-template prefactor (sigma^2/2 in one
display vs sigma/2 everywhere it is used); sigma/2 is the value consistent
with the kernel factorization identity and with the contraction side, and is
what this engine uses.  The exponent is recorded in VERTEX_SIGMA_POWER for
auditability.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .diagrams import (
    Correction,
    Diagram,
    DiagramSeries,
    DiagramSum,
    Drift,
    External,
    Noise,
    n_parts,
    validate_diagram,
)
from .errors import CoincidentTimes, GridTooCoarse, InvalidInput, OrderTooLarge
from .evaluate import NumericSeries, QuadConfig
from .model import ModelSpec

VERTEX_SIGMA_POWER = 1  # noise template carries sigma**1 / 2, not sigma**2 / 2


# ---------------------------------------------------------------------------
# monomials


@dataclass(frozen=True)
class Monomial:
    """Product of field factors at indexed time slots.

    legs is a tuple of (slot, x_multiplicity, aux_multiplicity); a monomial
    with no aux legs is an observable the expectation maps accept.
    """

    legs: tuple[tuple[int, int, int], ...]
    scalar: Fraction = Fraction(1)

    def __post_init__(self):
        object.__setattr__(self, "legs", tuple(sorted(self.legs)))
        object.__setattr__(self, "scalar", Fraction(self.scalar))
        if any(x < 0 or xt < 0 or (x == 0 and xt == 0) for _, x, xt in self.legs):
            raise InvalidInput("monomial legs need nonnegative, nonempty multiplicities")
        slots = [s for s, _, _ in self.legs]
        if len(slots) != len(set(slots)):
            raise InvalidInput("repeated slot in monomial; merge multiplicities")

    @staticmethod
    def from_indices(indices) -> "Monomial":
        """x(t_i1)*x(t_i2)*...: repeated indices raise the multiplicity."""
        counts: dict[int, int] = {}
        for i in indices:
            counts[i] = counts.get(i, 0) + 1
        return Monomial(tuple((s, m, 0) for s, m in counts.items()))

    @property
    def x_degree(self) -> int:
        return sum(x for _, x, _ in self.legs)

    @property
    def aux_degree(self) -> int:
        return sum(xt for _, _, xt in self.legs)

    def diagram(self) -> Diagram:
        vs = tuple(External(s, x, xt) for s, x, xt in self.legs)
        return Diagram(vs, (), self.scalar)


def product_diagram(factors) -> Diagram:
    """Disjoint product of monomials, re-slotted in order of appearance."""
    vs = []
    coeff = Fraction(1)
    slot = 0
    for f in factors:
        coeff *= f.scalar
        for _, x, xt in f.legs:
            vs.append(External(slot, x, xt))
            slot += 1
    return Diagram(tuple(vs), (), coeff)


def ensure_distinct_times(times) -> None:
    ts = [float(t) for t in times]
    if len(set(ts)) != len(ts):
        raise CoincidentTimes(f"observation times must be distinct, got {ts}")


# ---------------------------------------------------------------------------
# interacting vertex


@dataclass(frozen=True)
class InteractingVertexTemplates:
    """Which insertion templates exist for a model, with their weights."""

    drift: bool
    noise: bool
    correction: bool
    drift_weight: Fraction = Fraction(1)
    noise_weight: Fraction = Fraction(1, 2)
    correction_weight: Fraction = Fraction(0)


def interacting_vertex(model: ModelSpec) -> InteractingVertexTemplates:
    """Templates present for the model; the correction is absent when the
    convention parameter vanishes or the noise amplitude is x-independent."""
    has_drift = not model.alpha.is_zero()
    has_noise = not model.beta.is_zero()
    has_corr = has_noise and model.theta0 != 0 and not model.beta1.is_zero()
    return InteractingVertexTemplates(
        drift=has_drift,
        noise=has_noise,
        correction=has_corr,
        correction_weight=Fraction(model.theta0) if has_corr else Fraction(0),
    )


# ---------------------------------------------------------------------------
# the contraction map on external monomials


def _perm(n, k):
    return math.factorial(n) // math.factorial(n - k)


def gamma_G_apply(obj, times=None, restrict=False) -> DiagramSum:
    """Apply the auxiliary-field contraction map to a sum of open diagrams.

    Sums over all ways of converting (x-leg, aux-leg) pairs at distinct
    external vertices into directed edges; same-vertex pairs are skipped
    (equal-time kernel value fixed to zero inside the map).  With
    restrict=True, terms with surviving aux legs are dropped.
    """
    if isinstance(obj, Monomial):
        obj = DiagramSum([obj.diagram()])
    if isinstance(obj, Diagram):
        obj = DiagramSum([obj])
    if times is not None:
        ensure_distinct_times(times)
    out = []
    for rep in obj.terms():
        if rep.internal_indices():
            raise InvalidInput("contraction map operates on external monomial diagrams")
        out.extend(_gamma_on_diagram(rep))
    result = DiagramSum(out)
    if restrict:
        result = at_aux_zero(result)
    return result


def _gamma_on_diagram(d: Diagram):
    n = len(d.vertices)
    free_x = [d.vertices[v].legs - d.out_degree(v) for v in range(n)]
    free_a = [d.vertices[v].xt_legs - d.in_degree(v) for v in range(n)]
    pairs = [(s, t) for s in range(n) for t in range(n) if s != t]

    def counts_iter(idx, fx, fa):
        if idx == len(pairs):
            yield ()
            return
        s, t = pairs[idx]
        cap = min(fx[s], fa[t])
        for m in range(cap + 1):
            fx2, fa2 = list(fx), list(fa)
            fx2[s] -= m
            fa2[t] -= m
            for rest in counts_iter(idx + 1, fx2, fa2):
                yield ((s, t, m),) + rest if m else rest

    results = []
    for combo in counts_iter(0, free_x, free_a):
        mult = Fraction(1)
        used_x = [0] * n
        used_a = [0] * n
        new_edges = []
        for s, t, m in combo:
            used_x[s] += m
            used_a[t] += m
            mult /= math.factorial(m)
            new_edges.extend([(s, 0, t, 0)] * m)
        for v in range(n):
            mult *= _perm(free_x[v], used_x[v]) * _perm(free_a[v], used_a[v])
        nd = Diagram(d.vertices, d.edges + tuple(new_edges))
        if validate_diagram(nd):
            continue  # directed cycles vanish on retardation and are never emitted
        results.append((nd, d.coefficient * mult))
    return results


def gamma_G_inverse(obj) -> DiagramSum:
    """Inverse of the contraction map: the same pairing expansion with a
    sign per added edge (the deformation by the negated kernel)."""
    if isinstance(obj, Monomial):
        obj = DiagramSum([obj.diagram()])
    if isinstance(obj, Diagram):
        obj = DiagramSum([obj])
    out = []
    for rep in obj.terms():
        if rep.internal_indices():
            raise InvalidInput("contraction map operates on external monomial diagrams")
        for d, c in _gamma_on_diagram(rep):
            added = len(d.edges) - len(rep.edges)
            out.append((d, c * (-1) ** added))
    return DiagramSum(out)


def external_product(a: DiagramSum, b: DiagramSum) -> DiagramSum:
    """Pointwise product of sums of external diagrams on disjoint slots."""
    out = []
    for ra in a.terms():
        for rb in b.terms():
            kinds = ra.vertices + rb.vertices
            shift = len(ra.vertices)
            edges = ra.edges + tuple((s + shift, ss, t + shift, ts) for s, ss, t, ts in rb.edges)
            slots = [k.slot for k in kinds]
            if len(set(slots)) != len(slots):
                raise InvalidInput("product factors must live on disjoint slots")
            out.append((Diagram(kinds, edges), ra.coefficient * rb.coefficient))
    return DiagramSum(out)


def g_product(a: DiagramSum, b: DiagramSum) -> DiagramSum:
    """Deformed product on contracted sums: contract the plain product of
    the un-contracted factors."""
    return gamma_G_apply(external_product(gamma_G_inverse(a), gamma_G_inverse(b)))


def at_aux_zero(s: DiagramSum) -> DiagramSum:
    """Drop every term with a surviving aux leg (evaluation at zero field)."""
    kept = []
    for rep in s.terms():
        open_aux = any(
            isinstance(k, External) and k.xt_legs > rep.in_degree(v)
            for v, k in enumerate(rep.vertices)
        )
        if not open_aux:
            kept.append(rep)
    return DiagramSum(kept)


def vanishing_check(factors) -> bool:
    """True iff the contracted product of aux-carrying local factors dies at
    zero auxiliary field.  Exists as a property-test hook; for valid inputs
    the closed-path argument forces True."""
    for f in factors:
        if f.aux_degree == 0:
            raise InvalidInput("every factor must carry at least one aux leg")
    prod = product_diagram(factors)
    return at_aux_zero(gamma_G_apply(DiagramSum([prod]))).is_zero()


# ---------------------------------------------------------------------------
# expectation values


def _source_cap(kind_tag, part, model: ModelSpec) -> int:
    da, db = model.alpha.degree, model.beta.degree
    if kind_tag == "d":
        return max(da, 0)
    if kind_tag == "n":
        return max(db, 0)
    return max(db, 0) if part == 0 else max(db - 1, 0)


def _payload_ok(kind_tag, part, hits, model: ModelSpec) -> bool:
    if kind_tag == "d":
        return not model.alpha.deriv(hits).is_zero()
    if kind_tag == "n" or (kind_tag == "c" and part == 0):
        return not model.beta.deriv(hits).is_zero()
    return not model.beta.deriv(1 + hits).is_zero()


def _expand_counts(f: Monomial, model: ModelSpec, n_d: int, n_n: int, n_c: int, corr_weight: Fraction):
    """All closed labeled diagrams with the given template counts.

    Sources are external legs and internal payload parts; every auxiliary
    in-slot picks one source at a different vertex.  The per-diagram count is
    the number of leg matchings, i.e. a falling factorial per external vertex
    (slotted internal targets contribute through distinct assignments).
    """
    ext = [(s, x) for s, x, xt in f.legs]
    k_ext = len(ext)
    tags = ["d"] * n_d + ["n"] * n_n + ["c"] * n_c
    n_int = len(tags)
    slots = []
    for i, tag in enumerate(tags):
        v = k_ext + i
        slots.append((v, 0))
        if tag == "n":
            slots.append((v, 1))
    sources = [("ext", v) for v in range(k_ext)]
    for i, tag in enumerate(tags):
        v = k_ext + i
        for p in range(2 if tag in ("n", "c") else 1):
            sources.append(("part", v, p, tag))

    base_weight = (
        Fraction(1, math.factorial(n_d) * math.factorial(n_n) * math.factorial(n_c))
        * Fraction(1, 2) ** n_n
        * corr_weight**n_c
        * f.scalar
    )

    results = []

    def rec(i, ext_used, part_hits, edges):
        if i == len(slots):
            mult = Fraction(1)
            for v in range(k_ext):
                if ext_used[v] > ext[v][1]:
                    return
                mult *= _perm(ext[v][1], ext_used[v])
            kinds = [External(s, x) for s, x in ext]
            for j, tag in enumerate(tags):
                v = k_ext + j
                outs = [part_hits.get((v, p), 0) for p in range(2)]
                for p in range(2 if tag in ("n", "c") else 1):
                    if not _payload_ok(tag, p, outs[p], model):
                        return
                if tag == "d":
                    kinds.append(Drift(outs[0]))
                elif tag == "n":
                    kinds.append(Noise(outs[0], outs[1]))
                else:
                    kinds.append(Correction(outs[0], outs[1]))
            d = Diagram(tuple(kinds), tuple(edges))
            if validate_diagram(d, closed=True):
                return
            results.append((d, base_weight * mult))
            return
        v_t, s_t = slots[i]
        for src in sources:
            if src[0] == "ext":
                v_s = src[1]
                if ext_used[v_s] >= ext[v_s][1]:
                    continue
                ext_used[v_s] += 1
                rec(i + 1, ext_used, part_hits, edges + [(v_s, 0, v_t, s_t)])
                ext_used[v_s] -= 1
            else:
                _, v_s, p, tag = src
                if v_s == v_t:
                    continue
                h = part_hits.get((v_s, p), 0)
                if h + 1 > _source_cap(tag, p, model):
                    continue
                part_hits[(v_s, p)] = h + 1
                rec(i + 1, ext_used, part_hits, edges + [(v_s, p, v_t, s_t)])
                if h:
                    part_hits[(v_s, p)] = h
                else:
                    del part_hits[(v_s, p)]

    rec(0, [0] * k_ext, {}, [])
    return results


def msr_expectation(
    f: Monomial,
    model: ModelSpec,
    order: int,
    *,
    max_order: int = 8,
    use_templates: tuple[bool, bool, bool] | None = None,
    times=None,
) -> DiagramSeries:
    """Graded expansion of the expectation of an x-monomial.

    Entry m collects all closed diagrams of cutoff order m built from the
    monomial's legs and the interacting-vertex templates; the order-0 entry
    is the bare product of initial values.
    """
    if f.aux_degree:
        raise InvalidInput("expectation takes x-monomials only")
    if order > max_order:
        raise OrderTooLarge(f"order {order} exceeds bound {max_order}")
    if times is not None:
        ensure_distinct_times(times)
    tmpl = interacting_vertex(model)
    use_d, use_n, use_c = (
        use_templates if use_templates is not None else (tmpl.drift, tmpl.noise, tmpl.correction)
    )
    series = DiagramSeries(order)
    for m in range(order + 1):
        for n_n in range(0, m // 2 + 1):
            for n_c in range(0, m // 2 - n_n + 1):
                n_d = m - 2 * n_n - 2 * n_c
                if n_d < 0:
                    continue
                if (n_d and not use_d) or (n_n and not use_n) or (n_c and not use_c):
                    continue
                for d, c in _expand_counts(f, model, n_d, n_n, n_c, tmpl.correction_weight):
                    series.add_term(d, c)
    return series


# ---------------------------------------------------------------------------
# noise-pair insertion (the x-independent-kernel deformation on open sums)


def gamma_q_insert(s: DiagramSum, model: ModelSpec, n_pairs: int) -> DiagramSum:
    """Insert n_pairs noise vertices by pairing x-sites of each diagram.

    Sites are unconsumed external legs and internal payload parts.  Each
    unordered site pair becomes a leaf noise vertex fed by the two sites;
    pairing a payload part with itself contributes weight 1/2 per copy, and
    repeated pairs pick up the usual 1/m! symmetrization.  This is the
    pairing-first organization of the noise expansion, used by the kernel
    factorization route and the additive cross-check.
    """
    out = []
    for rep in s.terms():
        out.extend(_q_insert_diagram(rep, model, n_pairs))
    return DiagramSum(out)


def _q_insert_diagram(d: Diagram, model: ModelSpec, n_pairs: int):
    sites = []
    for v, kind in enumerate(d.vertices):
        if isinstance(kind, External):
            for leg in range(d.unconsumed_legs(v)):
                sites.append(("extleg", v, leg))
        elif isinstance(kind, (Drift, Noise, Correction)):
            for p in range(n_parts(kind)):
                sites.append(("part", v, p))

    def site_cap(site, extra):
        if site[0] == "extleg":
            return 1
        _, v, p = site
        kind = d.vertices[v]
        if isinstance(kind, Drift):
            have = kind.out
            cap = max(model.alpha.degree, 0)
        elif isinstance(kind, Noise):
            have = (kind.out1, kind.out2)[p]
            cap = max(model.beta.degree, 0)
        else:
            have = (kind.out1, kind.out2)[p]
            cap = max(model.beta.degree - (1 if p == 1 else 0), 0)
        return max(cap - have - extra, 0)

    pair_list = list(itertools.combinations_with_replacement(range(len(sites)), 2))
    results = []

    def rec(start, remaining, usage, chosen):
        if remaining == 0:
            results.append(_materialize_pairs(d, model, sites, chosen))
            return
        for idx in range(start, len(pair_list)):
            a, b = pair_list[idx]
            u2 = dict(usage)
            u2[a] = u2.get(a, 0) + 1
            u2[b] = u2.get(b, 0) + 1
            if sites[a][0] == "extleg" and u2[a] > 1:
                continue
            if sites[b][0] == "extleg" and u2[b] > 1:
                continue
            if sites[a][0] == "part" and site_cap(sites[a], 0) < u2[a]:
                continue
            if sites[b][0] == "part" and site_cap(sites[b], 0) < u2[b]:
                continue
            rec(idx, remaining - 1, u2, chosen + [(a, b)])

    rec(0, n_pairs, {}, [])
    return [r for r in results if r is not None]


def _materialize_pairs(d: Diagram, model: ModelSpec, sites, chosen):
    kinds = list(d.vertices)
    edges = list(d.edges)
    weight = Fraction(1)
    pair_counts: dict[tuple[int, int], int] = {}
    for a, b in chosen:
        pair_counts[(a, b)] = pair_counts.get((a, b), 0) + 1
    extra_hits: dict[tuple[int, int], int] = {}
    for (a, b), m in pair_counts.items():
        weight /= math.factorial(m)
        if a == b:
            weight *= Fraction(1, 2) ** m
        for _ in range(m):
            nv = len(kinds)
            kinds.append(Noise(0, 0))
            for slot, site_idx in ((0, a), (1, b)):
                site = sites[site_idx]
                if site[0] == "extleg":
                    edges.append((site[1], 0, nv, slot))
                else:
                    _, v, p = site
                    extra_hits[(v, p)] = extra_hits.get((v, p), 0) + 1
                    edges.append((v, p, nv, slot))
    for (v, p), add in extra_hits.items():
        kind = kinds[v]
        if isinstance(kind, Drift):
            kinds[v] = Drift(kind.out + add)
            if model.alpha.deriv(kind.out + add).is_zero():
                return None
        elif isinstance(kind, Noise):
            outs = [kind.out1, kind.out2]
            outs[p] += add
            kinds[v] = Noise(*outs)
            if model.beta.deriv(outs[p]).is_zero():
                return None
        elif isinstance(kind, Correction):
            outs = [kind.out1, kind.out2]
            outs[p] += add
            kinds[v] = Correction(*outs)
            if model.beta.deriv(outs[p] + (1 if p == 1 else 0)).is_zero():
                return None
    nd = Diagram(tuple(kinds), tuple(edges))
    if validate_diagram(nd, closed=False):
        return None
    return (nd, d.coefficient * weight)


# ---------------------------------------------------------------------------
# kernel tables


@dataclass
class QKernel:
    """Symmetric noise kernel Q(t,t') = integral up to min(t,t') of the
    squared cutoff times the squared noise amplitude at the initial value."""

    grid: np.ndarray
    cum: np.ndarray
    error: float

    def __call__(self, t, tp):
        m = np.minimum(np.asarray(t, dtype=float), np.asarray(tp, dtype=float))
        return np.interp(m, self.grid, self.cum, left=0.0, right=float(self.cum[-1]))

    def table(self, times):
        return np.array([[float(self(a, b)) for b in times] for a in times])


def _cumulative(fn, lo, hi, n):
    xs = np.linspace(lo, hi, n)
    ys = fn(xs)
    mids = 0.5 * (xs[:-1] + xs[1:])
    ym = fn(mids)
    h = xs[1] - xs[0]
    seg = h * (ys[:-1] + 4.0 * ym + ys[1:]) / 6.0
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    return xs, cum


def q_kernel(model: ModelSpec, grid=None, n=2001, tol=1e-7) -> QKernel:
    """Tabulated symmetric kernel; raises when the Richardson error estimate
    between two resolutions exceeds tol."""
    a, b = model.chi.support
    hi = b
    if grid is not None and len(grid):
        hi = max(hi, float(np.max(grid)))
    beta0 = model.beta

    def integrand(s):
        return model.chi_eps(s) ** 2 * beta0(model.x0, s) ** 2

    xs, cum = _cumulative(integrand, a, hi, n)
    _, cum2 = _cumulative(integrand, a, hi, max(3, (n - 1) // 2 + 1))
    err = float(np.max(np.abs(cum[:: 2 if (n - 1) % 2 == 0 else 1][: len(cum2)] - cum2))) if (n - 1) % 2 == 0 else 0.0
    scale = max(1.0, float(cum[-1]))
    if err > tol * scale:
        raise GridTooCoarse(f"kernel table error {err:g} above tolerance {tol:g}")
    return QKernel(xs, cum, err)


@dataclass
class ResummedPropagator:
    """Fundamental solution of d/dt - chi*a1 as a retarded kernel table."""

    grid: np.ndarray
    cum_a: np.ndarray
    theta_zero: float
    error: float

    def exponent(self, t):
        return np.interp(np.asarray(t, dtype=float), self.grid, self.cum_a, left=0.0, right=float(self.cum_a[-1]))

    def __call__(self, t, tp):
        t = np.asarray(t, dtype=float)
        tp = np.asarray(tp, dtype=float)
        step = np.where(t > tp, 1.0, np.where(t < tp, 0.0, self.theta_zero))
        return step * np.exp(self.exponent(t) - self.exponent(tp))

    def table(self, times):
        return np.array([[float(self(a, b)) for b in times] for a in times])


def resummed_propagator(alpha1, chi, grid=None, epsilon=1.0, n=4001, tol=1e-9, theta_zero=0.0) -> ResummedPropagator:
    """Exponential resummation of the linear-drift chain insertions."""
    a, b = chi.support
    lo, hi = a, b
    if grid is not None and len(grid):
        lo = min(lo, float(np.min(grid)))
        hi = max(hi, float(np.max(grid)))

    def integrand(s):
        return epsilon * chi(s) * np.asarray(alpha1(s), dtype=float)

    xs, cum = _cumulative(integrand, lo, hi, n)
    _, cum2 = _cumulative(integrand, lo, hi, max(3, (n - 1) // 2 + 1))
    err = float(np.max(np.abs(cum[::2][: len(cum2)] - cum2))) if (n - 1) % 2 == 0 else 0.0
    if err > tol * max(1.0, float(np.max(np.abs(cum)))):
        raise GridTooCoarse(f"propagator table error {err:g} above tolerance {tol:g}")
    return ResummedPropagator(xs, cum, theta_zero, err)


# ---------------------------------------------------------------------------
# time-ordered exponential route


def t_exp_apply(
    f: Monomial,
    model: ModelSpec,
    order: int,
    quad: QuadConfig = QuadConfig(),
    times=None,
    *,
    max_order: int = 8,
) -> NumericSeries:
    """Numeric expectation through the kernel-factorized route.

    Noise pairings are organized as kernel insertions: the drift/correction
    skeleton is expanded first and leaf noise vertices are attached by site
    pairing; evaluation collapses every leaf noise vertex to a lookup in the
    precomputed symmetric kernel table, so per-order values arrive through a
    different quadrature organization than the direct evaluator.  Agrees
    order by order with the direct expectation.
    """
    if order > max_order:
        raise OrderTooLarge(f"order {order} exceeds bound {max_order}")
    if times is None:
        raise InvalidInput("times required for numeric evaluation")
    ensure_distinct_times(times)
    tmpl = interacting_vertex(model)
    qk = q_kernel(model, grid=np.asarray(times, dtype=float))
    skeletons: dict[int, DiagramSum] = {}
    for m in range(order + 1):
        sk = DiagramSum.zero()
        for n_c in range(0, m // 2 + 1):
            n_d = m - 2 * n_c
            if n_d < 0 or (n_d and not tmpl.drift) or (n_c and not tmpl.correction):
                continue
            terms = _expand_counts(f, model, n_d, 0, n_c, tmpl.correction_weight)
            sk = sk + DiagramSum(terms)
        if not sk.is_zero():
            skeletons[m] = sk
    orders: dict[int, tuple[float, float]] = {}
    for m in range(order + 1):
        total, err = 0.0, 0.0
        for m_sk, sk in skeletons.items():
            n_pairs, rem = divmod(m - m_sk, 2)
            if rem or n_pairs < 0:
                continue
            inserted = gamma_q_insert(sk, model, n_pairs) if n_pairs else sk
            for rep in inserted.terms():
                if validate_diagram(rep, closed=True):
                    continue
                v, e = evaluate_collapsed(rep, model, times, qk, quad)
                total += v
                err += e
        if (m in skeletons) or total != 0.0 or m == 0:
            orders[m] = (total, err)
    return NumericSeries(order, orders)


def evaluate_collapsed(d: Diagram, model: ModelSpec, times, qk: QKernel, quad: QuadConfig):
    """Evaluate a closed diagram with leaf noise vertices collapsed to
    kernel-table lookups; remaining variables go through the panel or
    sampling integrator."""
    from . import evaluate as _ev

    collapsed = {}
    for v, kind in enumerate(d.vertices):
        if isinstance(kind, Noise) and kind.out1 == 0 and kind.out2 == 0 and d.out_degree(v) == 0:
            srcs = [(e[0], e[1]) for e in d.edges if e[2] == v]
            if len(srcs) == 2:
                collapsed[v] = (srcs[0][0], srcs[1][0])
    var_of = {}
    ext_time = {}
    for v, kind in enumerate(d.vertices):
        if isinstance(kind, External):
            if kind.slot >= len(times):
                raise InvalidInput(f"slot {kind.slot} unbound")
            ext_time[v] = float(times[kind.slot])
        elif v not in collapsed:
            var_of[v] = len(var_of)
    nvars = len(var_of)
    xpow = sum(d.unconsumed_legs(v) for v in d.external_indices())
    const = float(d.coefficient) * model.x0**xpow * model.sigma ** len(collapsed)

    payloads = [(var_of[v], _ev._payload_fn(d.vertices[v], model)) for v in var_of]
    qfactors = []
    for v, (sa, sb) in collapsed.items():
        na = ("ext", ext_time[sa]) if sa in ext_time else ("var", var_of[sa])
        nb = ("ext", ext_time[sb]) if sb in ext_time else ("var", var_of[sb])
        qfactors.append((na, nb))
    theta_pairs = []
    for s, _, t, _ in d.edges:
        if t in collapsed or s in collapsed:
            continue
        late = ("ext", ext_time[s]) if s in ext_time else ("var", var_of[s])
        early = ("ext", ext_time[t]) if t in ext_time else ("var", var_of[t])
        theta_pairs.append((late, early))

    def node_values(node, S):
        if node[0] == "ext":
            return node[1]
        return S[node[1]]

    def smooth_fn(S):
        out = np.ones(S.shape[1])
        for axis, fn in payloads:
            out = out * fn(S[axis])
        for na, nb in qfactors:
            out = out * qk(node_values(na, S), node_values(nb, S))
        return out

    if nvars == 0:
        value = smooth_fn(np.zeros((0, 1)))[0]
        for s, _, t, _ in d.edges:
            if s in collapsed or t in collapsed:
                continue
            value *= float(_ev.theta(ext_time[s] - ext_time[t], quad.theta_zero))
        return const * value, abs(const) * qk.error
    value, err = _ev._panel_with_refine(nvars, theta_pairs, smooth_fn, model, ext_time, quad)
    return const * value, abs(const) * (err + qk.error)
