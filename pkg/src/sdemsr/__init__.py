"""Perturbative expansions for cutoff-switched scalar stochastic dynamics.

Two independent pipelines expand moments of dx = chi(alpha + beta sqrt(sigma) noise)
as formal power series in the cutoff: a solution-tree pipeline contracted by
the white-noise pairing, and a response-field pipeline driven by an
interacting vertex and a retarded-kernel deformation.  The package verifies
their order-by-order equality exactly (rational diagram sums) and
numerically (quadrature and Monte Carlo).
"""

from .model import (
    Constant,
    CutoffFunction,
    ModelSpec,
    PolyT,
    Polynomial1D,
    Sinusoid,
    Tabulated,
    bump,
    plateau,
)
from .diagrams import (
    Correction,
    Diagram,
    DiagramSeries,
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
    to_dot,
    to_text,
    validate_diagram,
)
from .msr import (
    Monomial,
    gamma_G_apply,
    at_aux_zero,
    interacting_vertex,
    msr_expectation,
    q_kernel,
    resummed_propagator,
    t_exp_apply,
    vanishing_check,
)
from .sde import (
    contraction_pattern_census,
    perturb_solution,
    sde_expectation,
    wick_contract,
)
from .evaluate import NumericSeries, QuadConfig, evaluate_diagram, evaluate_series, evaluate_sum
from .mc import MCConfig, MCResult, exact_benchmark, isserlis_gamma_delta, simulate
from .correspondence import CheckReport, check_additive, check_general, check_multiplicative, run_check

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
