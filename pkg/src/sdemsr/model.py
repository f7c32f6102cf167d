"""Problem-instance types: polynomials in x with t-dependent coefficients,
smooth compactly supported cutoffs, and the full model specification.

The drift and noise-amplitude functions are polynomials in the state x whose
coefficients may depend smoothly on time.  Only a small built-in family of
time dependencies is supported so that runs are reproducible from a flat
config file: constants, polynomials in t, sinusoids, and tabulated data with
monotone cubic interpolation.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
import math

import numpy as np
from scipy.interpolate import PchipInterpolator


class ModelError(ValueError):
    """Invalid model specification."""


# ---------------------------------------------------------------------------
# time-dependent coefficients


class Coefficient:
    """A smooth function of t used as one polynomial coefficient."""

    def __call__(self, t):
        raise NotImplementedError

    def scaled(self, factor: float) -> "Coefficient":
        raise NotImplementedError

    def is_zero(self) -> bool:
        return False

    def spec(self) -> str:
        """Round-trippable text form (used by the config layer)."""
        raise NotImplementedError


@dataclass(frozen=True)
class Constant(Coefficient):
    value: float

    def __call__(self, t):
        return np.full_like(np.asarray(t, dtype=float), self.value)

    def scaled(self, factor):
        return Constant(self.value * factor)

    def is_zero(self):
        return self.value == 0.0

    def spec(self):
        return repr(self.value)


@dataclass(frozen=True)
class PolyT(Coefficient):
    """c0 + c1*t + c2*t**2 + ..."""

    coeffs: tuple[float, ...]

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for c in reversed(self.coeffs):
            out = out * t + c
        return out

    def scaled(self, factor):
        return PolyT(tuple(c * factor for c in self.coeffs))

    def is_zero(self):
        return all(c == 0.0 for c in self.coeffs)

    def spec(self):
        return "polyt(%s)" % ",".join(repr(c) for c in self.coeffs)


@dataclass(frozen=True)
class Sinusoid(Coefficient):
    """amp * sin(omega*t + phase) + offset."""

    amp: float
    omega: float
    phase: float = 0.0
    offset: float = 0.0

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return self.amp * np.sin(self.omega * t + self.phase) + self.offset

    def scaled(self, factor):
        return Sinusoid(self.amp * factor, self.omega, self.phase, self.offset * factor)

    def is_zero(self):
        return self.amp == 0.0 and self.offset == 0.0

    def spec(self):
        return "sin(%r,%r,%r,%r)" % (self.amp, self.omega, self.phase, self.offset)


@dataclass(frozen=True)
class Tabulated(Coefficient):
    """Monotone cubic interpolation through (ts, vs); constant outside."""

    ts: tuple[float, ...]
    vs: tuple[float, ...]
    _interp: PchipInterpolator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.ts) < 2:
            raise ModelError("tabulated coefficient needs at least two points")
        interp = PchipInterpolator(np.asarray(self.ts), np.asarray(self.vs), extrapolate=False)
        object.__setattr__(self, "_interp", interp)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = self._interp(np.clip(t, self.ts[0], self.ts[-1]))
        return np.asarray(out, dtype=float)

    def scaled(self, factor):
        return Tabulated(self.ts, tuple(v * factor for v in self.vs))

    def is_zero(self):
        return all(v == 0.0 for v in self.vs)

    def spec(self):
        pts = ",".join("%r:%r" % (a, b) for a, b in zip(self.ts, self.vs))
        return "tab(%s)" % pts


def as_coefficient(c) -> Coefficient:
    if isinstance(c, Coefficient):
        return c
    if isinstance(c, (int, float, Fraction)):
        return Constant(float(c))
    raise ModelError(f"cannot interpret {c!r} as a coefficient")


# ---------------------------------------------------------------------------
# polynomials in x


@dataclass(frozen=True)
class Polynomial1D:
    """Polynomial in x with coefficients that are smooth functions of t.

    ``coeffs[d]`` multiplies ``x**d``.  Derivatives in x shift indices and
    pick up the usual falling-factorial factors, so ``deriv(k)`` is again a
    ``Polynomial1D`` and vanishes identically for k beyond the degree.
    """

    coeffs: tuple[Coefficient, ...]

    @staticmethod
    def from_list(values) -> "Polynomial1D":
        return Polynomial1D(tuple(as_coefficient(v) for v in values))

    @property
    def degree(self) -> int:
        """Largest d with a coefficient not identically zero (-1 if zero)."""
        for d in range(len(self.coeffs) - 1, -1, -1):
            if not self.coeffs[d].is_zero():
                return d
        return -1

    def is_zero(self) -> bool:
        return self.degree < 0

    def is_one(self) -> bool:
        if self.degree != 0:
            return False
        c = self.coeffs[0]
        return isinstance(c, Constant) and c.value == 1.0

    def coeff_nonzero(self, d: int) -> bool:
        return d < len(self.coeffs) and not self.coeffs[d].is_zero()

    def deriv(self, k: int) -> "Polynomial1D":
        if k == 0:
            return self
        out = []
        for d in range(k, len(self.coeffs)):
            factor = math.factorial(d) // math.factorial(d - k)
            out.append(self.coeffs[d].scaled(float(factor)))
        return Polynomial1D(tuple(out))

    def __call__(self, x, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for c in reversed(self.coeffs):
            out = out * x + c(t)
        return out

    def spec(self) -> str:
        return ", ".join(c.spec() for c in self.coeffs)


ZERO_POLY = Polynomial1D(())
ONE_POLY = Polynomial1D((Constant(1.0),))


# ---------------------------------------------------------------------------
# cutoff functions


def _smoothstep(u, sharpness):
    """C-infinity step: 0 for u<=0, 1 for u>=1."""
    u = np.asarray(u, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        fu = np.where(u > 0.0, np.exp(-sharpness / np.maximum(u, 1e-300)), 0.0)
        fv = np.where(1.0 - u > 0.0, np.exp(-sharpness / np.maximum(1.0 - u, 1e-300)), 0.0)
    denom = fu + fv
    return np.where(denom > 0.0, fu / np.where(denom > 0.0, denom, 1.0), np.where(u >= 1.0, 1.0, 0.0))


@dataclass(frozen=True)
class CutoffFunction:
    """Smooth coupling switch, 0 <= chi <= 1, vanishing outside [a, b].

    kind "bump": mollifier on [a, b], equal to 1 at the midpoint.
    kind "plateau": rises on [a, a1], equals 1 on [a1, b1], falls on [b1, b].
    """

    kind: str
    a: float
    b: float
    a1: float = 0.0
    b1: float = 0.0
    sharpness: float = 1.0

    def __post_init__(self):
        if self.kind not in ("bump", "plateau"):
            raise ModelError(f"unknown cutoff kind {self.kind!r}")
        if not self.a < self.b:
            raise ModelError("cutoff needs a < b")
        if self.kind == "plateau" and not (self.a < self.a1 <= self.b1 < self.b):
            raise ModelError("plateau needs a < a1 <= b1 < b")
        if self.sharpness <= 0:
            raise ModelError("sharpness must be positive")

    @property
    def support(self) -> tuple[float, float]:
        return (self.a, self.b)

    @property
    def plateau_window(self) -> tuple[float, float] | None:
        return (self.a1, self.b1) if self.kind == "plateau" else None

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "plateau":
            rise = _smoothstep((t - self.a) / (self.a1 - self.a), self.sharpness)
            fall = _smoothstep((self.b - t) / (self.b - self.b1), self.sharpness)
            return rise * fall
        mid = 0.5 * (self.a + self.b)
        half = 0.5 * (self.b - self.a)
        u = (t - mid) / half
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            inside = np.abs(u) < 1.0
            arg = np.where(inside, 1.0 - u * u, 1.0)
            val = np.where(inside, np.exp(self.sharpness * (1.0 - 1.0 / arg)), 0.0)
        return val

    def spec(self) -> dict:
        d = {"kind": self.kind, "a": self.a, "b": self.b, "sharpness": self.sharpness}
        if self.kind == "plateau":
            d["a1"] = self.a1
            d["b1"] = self.b1
        return d


def plateau(a, a1, b1, b, sharpness=1.0) -> CutoffFunction:
    return CutoffFunction("plateau", a, b, a1, b1, sharpness)


def bump(a, b, sharpness=1.0) -> CutoffFunction:
    return CutoffFunction("bump", a, b, sharpness=sharpness)


# ---------------------------------------------------------------------------
# model specification


@dataclass(frozen=True)
class ModelSpec:
    """One problem instance of dx = chi * (alpha(x,t) + beta(x,t) * sqrt(sigma) * noise).

    theta0 is the equal-time convention parameter (0 Ito, 1/2 Stratonovich)
    and is kept as an exact Fraction because it enters combinatorial
    coefficients.  epsilon is a global scale multiplying chi; it is the knob
    used to compare truncated series against Monte Carlo at small coupling.
    """

    alpha: Polynomial1D
    beta: Polynomial1D
    sigma: float
    x0: float
    theta0: Fraction
    chi: CutoffFunction
    epsilon: float = 1.0

    def __post_init__(self):
        if self.sigma <= 0:
            raise ModelError("sigma must be positive")
        th = Fraction(self.theta0)
        if not 0 <= th <= 1:
            raise ModelError("theta0 must lie in [0, 1]")
        object.__setattr__(self, "theta0", th)
        if self.epsilon < 0:
            raise ModelError("epsilon must be nonnegative")

    def chi_eps(self, t):
        """Scaled cutoff epsilon * chi(t)."""
        return self.epsilon * self.chi(t)

    @property
    def beta1(self) -> Polynomial1D:
        return self.beta.deriv(1)

    def alpha_deriv(self, k: int) -> Polynomial1D:
        return self.alpha.deriv(k)

    def beta_deriv(self, k: int) -> Polynomial1D:
        return self.beta.deriv(k)

    def replace(self, **kw) -> "ModelSpec":
        from dataclasses import replace as _replace

        return _replace(self, **kw)
