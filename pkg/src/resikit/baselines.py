"""Cohen's d and f baselines with noncentral-inversion confidence intervals.

The noncentral t and F CDFs are evaluated as Poisson-weighted series of
regularized incomplete beta terms (absolute tolerance 1e-10, at most 1e4
terms); confidence bounds invert them over the noncentrality parameter by
bracketed bisection to 1e-8 on the probability scale.
"""
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import betainc, gammaln

from .design import ContrastMatrix, DesignMatrix
from .errors import DegenerateGroupsError, ParameterError
from .intervals import ConfidenceInterval, _check_alpha
from .models import LINEAR, MODEL_BASED, ModelFamily, covariance, fit
from .resi import wald_statistics
from .special import normal_cdf

NONCENTRAL_T = "noncentral-t"
NONCENTRAL_F = "noncentral-f"

_ABS_TOL = 1e-10
_MAX_TERMS = 10_000
_PROB_TOL = 1e-8


@dataclass(frozen=True)
class CohenEstimate:
    """Classical standardized effect size with its noncentral-inversion CI."""

    value: float
    kind: str  # "d" | "f"
    ci: ConfidenceInterval
    df1: int
    df2: int


def _poisson_weights(rate: float):
    """Poisson pmf values covering all but ~1e-12 of the mass (capped)."""
    if rate <= 0.0:
        return np.array([0]), np.array([1.0])
    j_hi = int(min(_MAX_TERMS, math.ceil(rate + 12.0 * math.sqrt(rate) + 40.0)))
    js = np.arange(j_hi + 1)
    log_w = -rate + js * math.log(rate) - gammaln(js + 1.0)
    return js, np.exp(log_w)


def noncentral_t_cdf(t: float, df: float, delta: float) -> float:
    """CDF of the noncentral t distribution (series over incomplete betas)."""
    if df <= 0:
        raise ParameterError(f"noncentral t needs df > 0, got {df}")
    if t < 0.0:
        return 1.0 - noncentral_t_cdf(-t, df, -delta)
    base = normal_cdf(-delta)
    if t == 0.0:
        return base
    x = t * t / (t * t + df)
    rate = 0.5 * delta * delta
    js, w = _poisson_weights(rate)
    if rate > 0.0:
        log_q = -rate + js * math.log(rate) - gammaln(js + 1.5)
        q = (delta / math.sqrt(2.0)) * np.exp(log_q)
    else:
        q = np.where(js == 0, delta / math.sqrt(2.0) / math.exp(gammaln(1.5)), 0.0)
    total = 0.5 * np.sum(w * betainc(js + 0.5, 0.5 * df, x)
                         + q * betainc(js + 1.0, 0.5 * df, x))
    return float(min(max(base + total, 0.0), 1.0))


def noncentral_f_cdf(x: float, df1: float, df2: float, lam: float) -> float:
    """CDF of the noncentral F distribution with noncentrality ``lam``."""
    if df1 <= 0 or df2 <= 0:
        raise ParameterError(f"noncentral F needs positive dfs, got {df1}, {df2}")
    if lam < 0:
        raise ParameterError(f"noncentrality must be >= 0, got {lam}")
    if x <= 0.0:
        return 0.0
    y = df1 * x / (df1 * x + df2)
    js, w = _poisson_weights(0.5 * lam)
    total = np.sum(w * betainc(0.5 * df1 + js, 0.5 * df2, y))
    return float(min(max(total, 0.0), 1.0))


def _invert_decreasing(prob_at, target: float, lo: float, hi: float) -> float:
    """Solve prob_at(x) = target for a decreasing prob_at by bisection."""
    p_lo, p_hi = prob_at(lo), prob_at(hi)
    for _ in range(200):
        if p_hi <= target:
            break
        lo, p_lo = hi, p_hi
        hi = hi + max(1.0, abs(hi)) * 2.0
        p_hi = prob_at(hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        p_mid = prob_at(mid)
        if abs(p_mid - target) <= _PROB_TOL:
            return mid
        if p_mid > target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12 * max(1.0, abs(hi)):
            break
    return 0.5 * (lo + hi)


def cohens_d(y0, y1, alpha: float = 0.05) -> CohenEstimate:
    """Standardized mean difference (pooled SD, denominator n0 + n1 - 2).

    The interval inverts the noncentral t distribution at the observed
    t = d sqrt(n0 n1 / (n0 + n1)) and rescales the noncentrality bounds.
    """
    _check_alpha(alpha)
    y0 = np.asarray(y0, dtype=float)
    y1 = np.asarray(y1, dtype=float)
    n0, n1 = y0.size, y1.size
    if n0 < 2 or n1 < 2:
        raise ParameterError(f"both groups need >= 2 observations, got {n0}, {n1}")
    nu = n0 + n1 - 2
    pooled = ((n0 - 1) * np.var(y0, ddof=1) + (n1 - 1) * np.var(y1, ddof=1)) / nu
    if pooled <= 0.0:
        raise DegenerateGroupsError("zero pooled variance; d is undefined")
    d = float((np.mean(y1) - np.mean(y0)) / math.sqrt(pooled))
    scale = math.sqrt(n0 * n1 / (n0 + n1))
    t_obs = d * scale
    span = 4.0 + 2.0 * abs(t_obs)
    delta_lo = _invert_decreasing(lambda nc: noncentral_t_cdf(t_obs, nu, nc),
                                  1.0 - alpha / 2.0, t_obs - span, t_obs)
    delta_hi = _invert_decreasing(lambda nc: noncentral_t_cdf(t_obs, nu, nc),
                                  alpha / 2.0, t_obs, t_obs + span)
    ci = ConfidenceInterval(delta_lo / scale, delta_hi / scale, 1.0 - alpha,
                            NONCENTRAL_T)
    return CohenEstimate(value=d, kind="d", ci=ci, df1=1, df2=nu)


def cohens_f(design: DesignMatrix, y, L: ContrastMatrix,
             alpha: float = 0.05) -> CohenEstimate:
    """ANOVA effect size from the classical (non-robust) F statistic.

    f_hat = sqrt(F m1 / (n - m)); the interval inverts the noncentral F
    distribution for the noncentrality, with bounds clamped at zero, and
    maps endpoints through sqrt(lambda / n).
    """
    _check_alpha(alpha)
    model = fit(ModelFamily(LINEAR, include_dispersion=False), design, y,
                cov_mode=MODEL_BASED)
    stats = wald_statistics(model, covariance(model), L)
    n, m, m1 = stats.n, stats.m, stats.m1
    f_stat = stats.f_stat
    f_hat = math.sqrt(max(0.0, f_stat) * m1 / (n - m))

    def prob_at(lam):
        return noncentral_f_cdf(f_stat, m1, n - m, lam)

    lam_hi = n * (f_hat + 1.0) ** 2
    if prob_at(0.0) < 1.0 - alpha / 2.0:
        lam_lo = 0.0
    else:
        lam_lo = max(0.0, _invert_decreasing(prob_at, 1.0 - alpha / 2.0, 0.0, lam_hi))
    if prob_at(0.0) < alpha / 2.0:
        lam_up = 0.0
    else:
        lam_up = max(0.0, _invert_decreasing(prob_at, alpha / 2.0, lam_lo, lam_hi))
    ci = ConfidenceInterval(math.sqrt(lam_lo / n), math.sqrt(lam_up / n),
                            1.0 - alpha, NONCENTRAL_F)
    return CohenEstimate(value=f_hat, kind="f", ci=ci, df1=m1, df2=n - m)
