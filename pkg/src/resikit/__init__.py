"""Robust effect size indices for estimating-equation regression.

Point estimators, delta-method asymptotic confidence intervals (with a
truncated construction for unsigned estimates near zero), a bootstrap
comparator, Cohen's d/f baselines, and a simulation harness, behind a CLI
(``resikit analyze|simulate|benchmark``).
"""
from ._backend import BACKEND
from .baselines import CohenEstimate, cohens_d, cohens_f
from .design import (
    ContrastMatrix,
    DesignMatrix,
    TermSpec,
    build_design,
    contrast_for_terms,
    natural_spline_basis,
)
from .intervals import (
    ConfidenceInterval,
    bootstrap_ci,
    signed_ci,
    truncated_ci,
)
from .models import (
    CovarianceEstimate,
    FittedModel,
    ModelFamily,
    bread,
    covariance,
    fit,
    meat,
)
from .resi import (
    DerivativeBundle,
    ResiEstimate,
    WaldStatistics,
    derivative_bundle,
    effect_size_at,
    resi_estimate,
    resi_f,
    resi_scaled,
    resi_signed,
    resi_t,
    resi_unsigned,
    resi_variance,
    wald_statistics,
)
from .simlab import Scenario, SimReport, generate, run_grid, solve_beta

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "CohenEstimate",
    "ConfidenceInterval",
    "ContrastMatrix",
    "CovarianceEstimate",
    "DerivativeBundle",
    "DesignMatrix",
    "FittedModel",
    "ModelFamily",
    "ResiEstimate",
    "Scenario",
    "SimReport",
    "TermSpec",
    "WaldStatistics",
    "bootstrap_ci",
    "bread",
    "build_design",
    "cohens_d",
    "cohens_f",
    "contrast_for_terms",
    "covariance",
    "derivative_bundle",
    "effect_size_at",
    "fit",
    "generate",
    "meat",
    "natural_spline_basis",
    "resi_estimate",
    "resi_f",
    "resi_scaled",
    "resi_signed",
    "resi_t",
    "resi_unsigned",
    "resi_variance",
    "run_grid",
    "signed_ci",
    "solve_beta",
    "truncated_ci",
    "wald_statistics",
]
