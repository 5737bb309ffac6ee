"""Numerical toolkit for mean oscillation of coefficients and gradients of
divergence-form elliptic equations."""

from .dini import (
    DiniReport, ModulusFunction, dini_integral, lemma_ex_probe, parse_modulus, x_functional, x_limsup_estimate,
)
from .estimates import EstimateReport, UnboundedGradientError, est1_report, est2_report, est3_report, hrep_report
from .fields import CoefficientField, VectorSolutionField, check_bounded_elliptic, make_example, radial_residual
from .oscillation import CenterStrategy, OscillationProfile, gradient_oscillation_profile, modulus_profile, sup_modulus
from .quadrature import QuadratureRule
from .solver import (
    DiscreteProblem, DiscreteSolution, Grid, ReplacementSequence, assemble_and_solve, continuity_recovery,
    harmonic_replacement, replacement_cascade,
)

__version__ = "0.1.0"

__all__ = [
    "CenterStrategy", "CoefficientField", "DiniReport", "DiscreteProblem", "DiscreteSolution", "EstimateReport",
    "Grid", "ModulusFunction", "OscillationProfile", "QuadratureRule", "ReplacementSequence",
    "UnboundedGradientError", "VectorSolutionField", "assemble_and_solve", "check_bounded_elliptic",
    "continuity_recovery", "dini_integral", "est1_report", "est2_report", "est3_report", "gradient_oscillation_profile",
    "harmonic_replacement", "hrep_report", "lemma_ex_probe", "make_example", "modulus_profile", "parse_modulus",
    "radial_residual", "replacement_cascade", "sup_modulus", "x_functional", "x_limsup_estimate",
]
