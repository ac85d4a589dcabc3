"""Confidence intervals for effect size estimates.

Unsigned estimates live on [0, inf); near the boundary a plain Wald
interval spills below zero, so the truncated construction clamps the lower
bound and re-allocates tail mass using the null right-tail probability of
the estimator. Signed estimates use symmetric Wald intervals. A
nonparametric case-resampling bootstrap is provided as a comparator.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .design import ContrastMatrix, DesignMatrix
from .errors import (
    BootstrapInstabilityError,
    FitError,
    IllConditionedError,
    ParameterError,
    SignedUndefinedError,
)
from .models import FittedModel, ModelFamily, covariance, fit
from .resi import (
    ResiEstimate,
    resi_f,
    resi_scaled,
    resi_signed,
    resi_t,
    resi_unsigned,
    wald_statistics,
)
from .special import chi2_sf, normal_quantile

logger = logging.getLogger(__name__)

TRUNCATED = "truncated-asymptotic"
WALD = "wald-asymptotic"
BOOTSTRAP = "bootstrap-percentile"

TWO_SIDED = "two-sided"
ONE_SIDED = "one-sided"
GAMMA_ADJUSTED = "gamma-adjusted"
NA = "n/a"

_MAX_REDRAWS = 100


@dataclass(frozen=True)
class ConfidenceInterval:
    lower: float
    upper: float
    level: float
    method: str
    branch: str = NA


def _check_alpha(alpha: float):
    if not 0.0 < alpha < 1.0:
        raise ParameterError(f"alpha must be in (0,1), got {alpha}")


def truncated_ci(est: ResiEstimate, alpha: float) -> ConfidenceInterval:
    """Truncated interval for an unsigned estimate.

    Starts from the two-sided Wald interval; when its lower bound is not
    positive, clamps at zero and widens or re-balances the upper bound using
    gamma = P(chi2_m1 > n s^2 + m1), the probability of exceeding the
    observed estimate under the censored-chi null.
    """
    _check_alpha(alpha)
    if est.se <= 0.0:
        raise ParameterError(f"estimate needs a positive standard error, got {est.se}")
    s, se = est.value, est.se
    lower = s - normal_quantile(1.0 - alpha / 2.0) * se
    if lower > 0.0:
        upper = s + normal_quantile(1.0 - alpha / 2.0) * se
        return ConfidenceInterval(lower, upper, 1.0 - alpha, TRUNCATED, TWO_SIDED)
    gamma = chi2_sf(est.n * s * s + est.m1, est.m1)
    if gamma < alpha / 2.0:
        upper = s + normal_quantile(1.0 - (alpha - gamma)) * se
        branch = GAMMA_ADJUSTED
    else:
        upper = s + normal_quantile(1.0 - alpha) * se
        branch = ONE_SIDED
    return ConfidenceInterval(0.0, upper, 1.0 - alpha, TRUNCATED, branch)


def signed_ci(est: ResiEstimate, alpha: float) -> ConfidenceInterval:
    """Symmetric Wald interval for a signed (single-df) estimate."""
    _check_alpha(alpha)
    if est.m1 != 1:
        raise SignedUndefinedError(f"signed interval needs m1=1, got {est.m1}")
    half = normal_quantile(1.0 - alpha / 2.0) * est.se
    return ConfidenceInterval(est.value - half, est.value + half, 1.0 - alpha, WALD)


def _point_estimate(model: FittedModel, L: ContrastMatrix, variant: str) -> float:
    cov = covariance(model)
    stats = wald_statistics(model, cov, L)
    builder = {
        "unsigned-chisq": resi_unsigned,
        "signed-z": resi_signed,
        "scaled": resi_scaled,
        "unsigned-f": resi_f,
        "signed-t": resi_t,
    }[variant]
    return builder(stats).value


def resample_rows(design: DesignMatrix, idx) -> DesignMatrix:
    return DesignMatrix(X=design.X[idx], column_terms=design.column_terms,
                        terms=design.terms)


def bootstrap_statistics(design: DesignMatrix, y, stat_fn, n_boot: int, seed: int,
                         workers: int = 1):
    """Run ``stat_fn(design_b, y_b)`` on ``n_boot`` row resamples.

    Replicates whose statistic raises a fitting error are redrawn from a
    fresh attempt-indexed stream, so results do not depend on scheduling.
    Returns ``(B x k array, total_failures)``; more than 10% failures raises
    ``BootstrapInstabilityError``.
    """
    y = np.asarray(y, dtype=float)
    n = design.n
    failures = np.zeros(n_boot, dtype=int)
    rows: list[np.ndarray | None] = [None] * n_boot

    def one(b: int):
        for attempt in range(_MAX_REDRAWS):
            rng = np.random.Generator(
                np.random.Philox(np.random.SeedSequence(seed, spawn_key=(b, attempt)))
            )
            idx = rng.integers(0, n, size=n)
            try:
                rows[b] = np.atleast_1d(
                    np.asarray(stat_fn(resample_rows(design, idx), y[idx]), dtype=float)
                )
                failures[b] = attempt
                return
            except (FitError, IllConditionedError):
                continue
        raise BootstrapInstabilityError(
            f"replicate {b} failed {_MAX_REDRAWS} consecutive redraws"
        )

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(one, range(n_boot)))
    else:
        for b in range(n_boot):
            one(b)

    total_failures = int(failures.sum())
    if total_failures > 0.1 * n_boot:
        raise BootstrapInstabilityError(
            f"{total_failures} failed fits over {n_boot} replicates (>10%)"
        )
    if total_failures:
        logger.info("bootstrap redrew %d failed replicates", total_failures)
    return np.vstack(rows), total_failures


def bootstrap_ci(family: ModelFamily, design: DesignMatrix, y, L: ContrastMatrix,
                 variant: str, alpha: float, n_boot: int = 1000, seed: int = 0,
                 cov_mode: str = "robust", flavor: str | None = None,
                 workers: int = 1) -> ConfidenceInterval:
    """Percentile interval from case resampling with replacement."""
    _check_alpha(alpha)
    if n_boot < 100:
        raise ParameterError(f"need at least 100 bootstrap replicates, got {n_boot}")

    def stat(design_b, y_b):
        model = fit(family, design_b, y_b, cov_mode=cov_mode, flavor=flavor)
        return _point_estimate(model, L, variant)

    values, _ = bootstrap_statistics(design, y, stat, n_boot, seed, workers)
    lower, upper = np.quantile(values[:, 0], [alpha / 2.0, 1.0 - alpha / 2.0])
    return ConfidenceInterval(float(lower), float(upper), 1.0 - alpha, BOOTSTRAP)
