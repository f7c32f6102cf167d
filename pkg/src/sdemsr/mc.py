"""Independent ground truth: path simulation and closed-form benchmarks.

The simulator integrates dx = chi_eps(t) * (alpha dt + beta sqrt(sigma) dW)
from the left edge of the cutoff support (where the state is exactly the
initial value) with either the Euler-Maruyama scheme (Ito) or the Heun
predictor-corrector (Stratonovich).  Randomness comes from counter-based
generators keyed on (seed, chunk) so path-level parallelism cannot change
results; the chunk size is part of the reproducibility contract.

A discrete pair-partition contraction oracle is included: it evaluates the
white-noise deformation of an explicit leaf-time integrand on a grid, with
the Kronecker delta carrying 1/spacing and the equal-time kernel value 1/2.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .diagrams import Diagram, External, Xi
from .errors import InvalidInput, ShapeMismatch, TooManySlots, UnstablePath
from .model import Constant, ModelSpec
from .msr import _cumulative


@dataclass(frozen=True)
class MCConfig:
    scheme: str
    dt: float
    paths: int
    seed: int
    times: tuple[float, ...]
    monomials: tuple[tuple[int, ...], ...]
    antithetic: bool = False
    chunk: int = 1 << 14

    def __post_init__(self):
        if self.scheme not in ("euler_maruyama", "heun"):
            raise InvalidInput(f"unknown scheme {self.scheme!r}")
        if self.dt <= 0:
            raise InvalidInput("dt must be positive")
        if self.paths < 1000:
            raise InvalidInput("paths must be at least 1000")


@dataclass
class MomentRow:
    monomial: tuple[int, ...]
    scheme: str
    estimate: float
    stderr: float
    paths: int


@dataclass
class MCResult:
    rows: list[MomentRow]
    dt: float
    seed: int

    def by_monomial(self):
        return {r.monomial: r for r in self.rows}


def _rng_for_chunk(seed: int, chunk_index: int) -> np.random.Generator:
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, chunk_index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def simulate(model: ModelSpec, cfg: MCConfig) -> MCResult:
    """Moment estimates of products of the state at the observation times."""
    a, _ = model.chi.support
    t_end = max(cfg.times)
    t0 = min(a, min(cfg.times))
    n_steps = max(1, int(round((t_end - t0) / cfg.dt)))
    dt = (t_end - t0) / n_steps
    tgrid = t0 + dt * np.arange(n_steps + 1)
    obs_idx = [int(round((t - t0) / dt)) for t in cfg.times]

    chi_g = model.chi_eps(tgrid)
    sqs = math.sqrt(model.sigma)
    alpha, beta = model.alpha, model.beta

    sums = {m: 0.0 for m in cfg.monomials}
    sums2 = {m: 0.0 for m in cfg.monomials}
    total = 0
    n_chunks = (cfg.paths + cfg.chunk - 1) // cfg.chunk
    for c in range(n_chunks):
        npaths = min(cfg.chunk, cfg.paths - c * cfg.chunk)
        rng = _rng_for_chunk(cfg.seed, c)
        if cfg.antithetic:
            half = (npaths + 1) // 2
            z = rng.standard_normal((half, n_steps))
            z = np.concatenate([z, -z])[:npaths]
        else:
            z = rng.standard_normal((npaths, n_steps))
        dw = z * math.sqrt(dt)
        x = np.full(npaths, model.x0, dtype=float)
        snapshots = {}
        if 0 in obs_idx:
            snapshots[0] = x.copy()
        for j in range(n_steps):
            t_here, t_next = tgrid[j], tgrid[j + 1]
            ch, cn = chi_g[j], chi_g[j + 1]
            f0 = ch * alpha(x, t_here)
            g0 = ch * beta(x, t_here) * sqs
            if cfg.scheme == "euler_maruyama":
                x = x + f0 * dt + g0 * dw[:, j]
            else:
                xp = x + f0 * dt + g0 * dw[:, j]
                f1 = cn * alpha(xp, t_next)
                g1 = cn * beta(xp, t_next) * sqs
                x = x + 0.5 * (f0 + f1) * dt + 0.5 * (g0 + g1) * dw[:, j]
            if not np.all(np.isfinite(x)):
                raise UnstablePath(
                    f"non-finite state at t={t_next:.6g} (dt={dt:g}, scheme={cfg.scheme}); "
                    "consider a smaller coupling scale"
                )
            if (j + 1) in obs_idx:
                snapshots[j + 1] = x.copy()
        for mono in cfg.monomials:
            vals = np.ones(npaths)
            for leg in mono:
                vals = vals * snapshots[obs_idx[leg]]
            sums[mono] += float(np.sum(vals))
            sums2[mono] += float(np.sum(vals * vals))
        total += npaths

    rows = []
    for mono in cfg.monomials:
        mean = sums[mono] / total
        var = max(sums2[mono] / total - mean * mean, 0.0)
        stderr = math.sqrt(var / total)
        rows.append(MomentRow(mono, cfg.scheme, mean, stderr, total))
    return MCResult(rows, dt, cfg.seed)


# ---------------------------------------------------------------------------
# closed-form benchmarks


def _linear_coefficient(poly) -> float:
    if poly.degree != 1 or poly.coeff_nonzero(0):
        raise ShapeMismatch("needs a homogeneous linear polynomial in x")
    c = poly.coeffs[1]
    if not isinstance(c, Constant):
        raise ShapeMismatch("needs a constant-in-t linear coefficient")
    return c.value


def exact_benchmark(name: str, model: ModelSpec, times, n: int = 20001):
    """Closed-form values used as oracles for the derived spec examples."""
    a, b = model.chi.support
    hi = max(b, max(times))
    if name == "linear_mean":
        lam = _linear_coefficient(model.alpha)
        if model.beta.degree > 0:
            raise ShapeMismatch("linear_mean needs x-independent noise amplitude")
        xs, cum = _cumulative(lambda s: model.chi_eps(s), a, hi, n)
        return [model.x0 * math.exp(lam * float(np.interp(t, xs, cum))) for t in times]
    if name == "gbm_moments":
        if not model.alpha.is_zero():
            raise ShapeMismatch("gbm_moments needs zero drift")
        if model.beta.degree != 1 or model.beta.coeff_nonzero(0) or _linear_coefficient(model.beta) != 1.0:
            raise ShapeMismatch("gbm_moments needs beta = x")
        xs, cum = _cumulative(lambda s: model.chi_eps(s) ** 2, a, hi, n)
        out = []
        for t in times:
            v = float(np.interp(t, xs, cum))
            out.append((model.x0 * math.exp(model.sigma * v / 2.0), model.x0**2 * math.exp(2.0 * model.sigma * v)))
        return out
    if name == "ou_variance":
        lam = _linear_coefficient(model.alpha)
        if lam >= 0:
            raise ShapeMismatch("ou_variance needs a negative linear drift rate")
        if model.beta.degree > 0:
            raise ShapeMismatch("ou_variance needs x-independent noise amplitude")
        beta0 = model.beta(0.0, 0.0)
        xs, cum = _cumulative(lambda s: model.chi_eps(s), a, hi, n)
        out = []
        for t in times:
            mask = xs <= t
            at = float(np.interp(t, xs, cum))
            integrand = model.chi_eps(xs[mask]) ** 2 * np.exp(2.0 * lam * (at - cum[mask]))
            out.append(model.sigma * beta0**2 * float(np.trapezoid(integrand, xs[mask])))
        return out
    if name == "brownian_cov":
        if not model.alpha.is_zero() or model.beta.degree > 0:
            raise ShapeMismatch("brownian_cov needs zero drift and constant amplitude")
        beta0 = model.beta(0.0, 0.0)
        xs, cum = _cumulative(lambda s: model.chi_eps(s) ** 2, a, hi, n)
        out = np.zeros((len(times), len(times)))
        for i, t in enumerate(times):
            for j, tp in enumerate(times):
                out[i, j] = model.sigma * beta0**2 * float(np.interp(min(t, tp), xs, cum))
        return out
    raise ShapeMismatch(f"unknown benchmark {name!r}")


# ---------------------------------------------------------------------------
# discrete pair-partition oracle


def _pair_partitions(items):
    if not items:
        yield ()
        return
    first, rest = items[0], items[1:]
    for i in range(len(rest)):
        for tail in _pair_partitions(rest[:i] + rest[i + 1 :]):
            yield ((first, rest[i]),) + tail


def isserlis_gamma_delta(integrand, grid, n_slots: int) -> float:
    """Contract an explicit leaf-time integrand by summing pair partitions.

    integrand(S) takes S of shape (n_slots, m) and returns the fully
    multiplied integrand (kernels, cutoffs, payloads) at those leaf times.
    Each partition identifies paired slots; the discrete delta eats one grid
    sum and one factor of the spacing.  Odd slot counts give zero.
    """
    if n_slots > 6:
        raise TooManySlots(f"{n_slots} leaf slots exceeds the oracle bound of 6")
    if n_slots % 2:
        return 0.0
    if n_slots == 0:
        return float(integrand(np.zeros((0, 1)))[0])
    grid = np.asarray(grid, dtype=float)
    delta = grid[1] - grid[0]
    npair = n_slots // 2
    total = 0.0
    for partition in _pair_partitions(tuple(range(n_slots))):
        mesh = np.meshgrid(*([grid] * npair), indexing="ij")
        S = np.zeros((n_slots, mesh[0].size))
        for p, (i, j) in enumerate(partition):
            S[i] = mesh[p].ravel()
            S[j] = mesh[p].ravel()
        total += float(np.sum(integrand(S))) * delta**npair
    return total


def xi_integrand_from_diagram(d: Diagram, model: ModelSpec, times, theta_zero: float = 0.5):
    """Leaf-time integrand of a solution forest whose internal vertices all
    carry leaves; returns (fn, n_slots) for the pair-partition oracle."""
    leaf_of = {}
    ext_time = {}
    for v, k in enumerate(d.vertices):
        if isinstance(k, External):
            ext_time[v] = float(times[k.slot])
        elif isinstance(k, Xi):
            leaf_of[v] = len(leaf_of)
        else:
            raise InvalidInput("oracle integrand needs a pure leaf forest")
    sqs = math.sqrt(model.sigma)
    payloads = [(leaf_of[v], model.beta.deriv(d.vertices[v].out)) for v in leaf_of]
    xpow = sum(d.unconsumed_legs(v) for v in d.external_indices())
    const = float(d.coefficient) * model.x0**xpow

    def fn(S):
        out = np.full(S.shape[1], const)
        for axis, poly in payloads:
            out = out * model.chi_eps(S[axis]) * sqs * poly(model.x0, S[axis])
        for s, _, t, _ in d.edges:
            late = ext_time[s] if s in ext_time else S[leaf_of[s]]
            early = ext_time[t] if t in ext_time else S[leaf_of[t]]
            diff = np.asarray(late - early, dtype=float)
            out = out * np.where(diff > 0, 1.0, np.where(diff < 0, 0.0, theta_zero))
        return out

    return fn, len(leaf_of)
