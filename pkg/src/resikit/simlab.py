"""Coverage/bias simulation harness for the effect-size estimators.

Scenarios follow a two-group design: linear outcomes Y = beta X + eps with
X ~ Bernoulli(0.4) and three error mechanisms (all rescaled to marginal
variance 2), or logistic outcomes with X ~ Bernoulli(0.5) and intercepts
controlling outcome balance. ``solve_beta`` maps a target effect size to
the generating slope through the population covariance of the design.

Replicate streams are counter-based (Philox) keyed by (seed, scenario
index, replicate index), so results are reproducible for any worker count.
"""
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .baselines import cohens_d, cohens_f
from .design import ContrastMatrix, DesignMatrix, TermSpec
from .errors import (
    ConfigError,
    DegenerateGroupsError,
    FitError,
    IllConditionedError,
    SolverError,
)
from .intervals import signed_ci, truncated_ci
from .models import LINEAR, LOGISTIC, MODEL_BASED, ROBUST, ModelFamily, fit
from .resi import resi_estimate

LINEAR_P = 0.4
LOGISTIC_P = 0.5
MARGINAL_VAR = 2.0
GAMMA_SHAPE = 1.200
GAMMA_RATE = 0.775
HETERO_SIGMA0 = 1.111
HETERO_SIGMA1 = 3.333

UNSIGNED = "unsigned"
SIGNED = "signed"
COHENS_D = "cohens-d"
COHENS_F = "cohens-f"

_ERROR_KINDS = ("normal", "gamma", "hetero")
_ETAS = (0.0, -1.0, -2.0)
_BETA_LIMIT = 50.0


@dataclass(frozen=True)
class Scenario:
    """One simulation cell: generative design plus estimator/covariance choice."""

    family: str
    target_s: float
    n: int
    error_kind: str | None = None  # linear families
    eta: float | None = None  # logistic intercept
    cov_mode: str = ROBUST
    flavor: str | None = None  # None = family default (HC3 linear, HC0 logistic)
    variant: str = UNSIGNED
    seed: int = 0

    def __post_init__(self):
        if self.family not in (LINEAR, LOGISTIC):
            raise ConfigError(f"unknown family {self.family!r}")
        if self.family == LINEAR and self.error_kind not in _ERROR_KINDS:
            raise ConfigError(f"linear scenario needs error_kind in {_ERROR_KINDS}")
        if self.family == LOGISTIC and self.eta is None:
            raise ConfigError("logistic scenario needs an intercept eta")
        if self.target_s < 0:
            raise ConfigError(f"target effect size must be >= 0, got {self.target_s}")
        if self.n < 10:
            raise ConfigError(f"need n >= 10, got {self.n}")
        if self.cov_mode not in (ROBUST, MODEL_BASED):
            raise ConfigError(f"unknown covariance mode {self.cov_mode!r}")
        if self.variant not in (UNSIGNED, SIGNED, COHENS_D, COHENS_F):
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.family == LOGISTIC and self.variant in (COHENS_D, COHENS_F):
            raise ConfigError("Cohen baselines are defined for linear scenarios only")

    @property
    def label(self) -> str:
        detail = self.error_kind if self.family == LINEAR else f"eta={self.eta:g}"
        return f"{self.family}/{detail}/S={self.target_s:g}/n={self.n}"


@dataclass(frozen=True)
class SimReport:
    """Replication metrics for one scenario."""

    scenario: Scenario
    bias: float
    bias_mcse: float
    coverage: float
    coverage_mcse: float
    mean_width: float
    replicates: int
    failures: int
    flagged: bool  # more than 5% replicate failures


def _hetero_scale() -> float:
    raw = LINEAR_P * HETERO_SIGMA1**2 + (1.0 - LINEAR_P) * HETERO_SIGMA0**2
    return math.sqrt(MARGINAL_VAR / raw)


def _expit(t):
    return np.where(t >= 0, 1.0 / (1.0 + np.exp(-np.abs(t))),
                    np.exp(-np.abs(t)) / (1.0 + np.exp(-np.abs(t))))


def population_slope_variance(scenario: Scenario, beta: float) -> float:
    """Population covariance of sqrt(n) times the slope under the scenario."""
    if scenario.family == LINEAR:
        p = LINEAR_P
        if scenario.error_kind == "hetero":
            c2 = _hetero_scale() ** 2
            return c2 * (HETERO_SIGMA1**2 / p + HETERO_SIGMA0**2 / (1.0 - p))
        return MARGINAL_VAR / (p * (1.0 - p))
    p = LOGISTIC_P
    mu0 = 1.0 / (1.0 + math.exp(-scenario.eta))
    mu1 = 1.0 / (1.0 + math.exp(-(scenario.eta + beta)))
    w0 = mu0 * (1.0 - mu0)
    w1 = mu1 * (1.0 - mu1)
    if w0 <= 0.0 or w1 <= 0.0:  # success probabilities saturated
        return math.inf
    # Exact two-point expectation; the model is correctly specified, so the
    # sandwich collapses to the inverse information.
    return 1.0 / (p * w1) + 1.0 / ((1.0 - p) * w0)


def solve_beta(scenario: Scenario) -> float:
    """Slope achieving the scenario's target effect size in population."""
    s = scenario.target_s
    if s == 0.0:
        return 0.0
    if scenario.family == LINEAR:
        return s * math.sqrt(population_slope_variance(scenario, 0.0))

    def gap(beta):
        return beta / math.sqrt(population_slope_variance(scenario, beta)) - s

    # The effect size rises, peaks, then decays as the slope saturates the
    # success probabilities; bracket the first (ascending) crossing.
    step = 0.01
    lo, hi = 0.0, step
    while hi <= _BETA_LIMIT:
        if gap(hi) >= 0.0:
            break
        lo = hi
        hi += step
    else:
        raise SolverError(
            f"target effect size {s} is not attainable with |beta| <= {_BETA_LIMIT} "
            f"at eta={scenario.eta}"
        )
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if gap(mid) > 0.0:
            hi = mid
        else:
            lo = mid
        if hi - lo < 1e-13:
            break
    beta = 0.5 * (lo + hi)
    if abs(gap(beta)) > 1e-10:
        raise SolverError(f"slope solver stalled at beta={beta} (gap {gap(beta):.2e})")
    return beta


_SLOPE_TERMS = (TermSpec("x", "binary"),)
_SLOPE_COLUMNS = ("intercept", "x")


def generate(scenario: Scenario, rng: np.random.Generator, beta: float | None = None):
    """Draw one dataset; returns ``(design, y)``."""
    if beta is None:
        beta = solve_beta(scenario)
    n = scenario.n
    if scenario.family == LINEAR:
        x = rng.binomial(1, LINEAR_P, size=n).astype(float)
        kind = scenario.error_kind
        if kind == "normal":
            eps = rng.normal(0.0, math.sqrt(MARGINAL_VAR), size=n)
        elif kind == "gamma":
            draws = rng.gamma(GAMMA_SHAPE, 1.0 / GAMMA_RATE, size=n)
            centered = draws - GAMMA_SHAPE / GAMMA_RATE
            eps = centered * math.sqrt(MARGINAL_VAR / (GAMMA_SHAPE / GAMMA_RATE**2))
        else:  # hetero
            c = _hetero_scale()
            sd = np.where(x == 1.0, c * HETERO_SIGMA1, c * HETERO_SIGMA0)
            eps = rng.normal(0.0, 1.0, size=n) * sd
        y = beta * x + eps
    else:
        x = rng.binomial(1, LOGISTIC_P, size=n).astype(float)
        prob = _expit(scenario.eta + beta * x)
        y = rng.binomial(1, prob).astype(float)
    X = np.column_stack([np.ones(n), x])
    design = DesignMatrix(X=X, column_terms=_SLOPE_COLUMNS, terms=_SLOPE_TERMS)
    return design, y


def _true_value(scenario: Scenario, beta: float) -> float:
    if scenario.variant in (UNSIGNED, SIGNED):
        # solve_beta returns beta >= 0, so the signed truth equals target_s.
        return scenario.target_s
    if scenario.variant == COHENS_D:
        return beta / math.sqrt(MARGINAL_VAR)
    p = LINEAR_P
    return abs(beta) * math.sqrt(p * (1.0 - p) / MARGINAL_VAR)


def _replicate_stream(seed: int, scenario_index: int, replicate: int):
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence(seed, spawn_key=(scenario_index,
                                                                 replicate)))
    )


_SLOPE_L = ContrastMatrix(L=np.array([[0.0, 1.0]]))


def _run_one(scenario: Scenario, beta: float, rng, alpha: float):
    """One replicate: (estimate, covered, width) or raises a fit error."""
    design, y = generate(scenario, rng, beta=beta)
    truth = _true_value(scenario, beta)
    if scenario.variant == COHENS_D:
        x = design.X[:, 1]
        est = cohens_d(y[x == 0.0], y[x == 1.0], alpha)
        ci = est.ci
        return est.value, ci.lower <= truth <= ci.upper, ci.upper - ci.lower
    if scenario.variant == COHENS_F:
        est = cohens_f(design, y, _SLOPE_L, alpha)
        ci = est.ci
        return est.value, ci.lower <= truth <= ci.upper, ci.upper - ci.lower
    family = ModelFamily(scenario.family)
    model = fit(family, design, y, cov_mode=scenario.cov_mode, flavor=scenario.flavor)
    signed = scenario.variant == SIGNED
    est = resi_estimate(model, _SLOPE_L, signed=signed)
    ci = signed_ci(est, alpha) if signed else truncated_ci(est, alpha)
    return est.value, ci.lower <= truth <= ci.upper, ci.upper - ci.lower


def run_scenario(scenario: Scenario, replicates: int, scenario_index: int = 0,
                 alpha: float = 0.05, workers: int = 1) -> SimReport:
    """Replicate one scenario; failed fits are excluded and counted."""
    if replicates < 10:
        raise ConfigError(f"need at least 10 replicates, got {replicates}")
    beta = solve_beta(scenario)
    truth = _true_value(scenario, beta)
    est = np.full(replicates, np.nan)
    cover = np.zeros(replicates, dtype=bool)
    width = np.full(replicates, np.nan)
    failed = np.zeros(replicates, dtype=bool)

    def one(r: int):
        rng = _replicate_stream(scenario.seed, scenario_index, r)
        try:
            est[r], cover[r], width[r] = _run_one(scenario, beta, rng, alpha)
        except (FitError, IllConditionedError, DegenerateGroupsError):
            failed[r] = True

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(one, range(replicates)))
    else:
        for r in range(replicates):
            one(r)

    ok = ~failed
    n_ok = int(ok.sum())
    if n_ok == 0:
        raise ConfigError(f"all replicates failed for {scenario.label}")
    values = est[ok]
    coverage = float(np.mean(cover[ok]))
    return SimReport(
        scenario=scenario,
        bias=float(np.mean(values) - truth),
        bias_mcse=float(np.std(values, ddof=1) / math.sqrt(n_ok)),
        coverage=coverage,
        coverage_mcse=math.sqrt(coverage * (1.0 - coverage) / n_ok),
        mean_width=float(np.mean(width[ok])),
        replicates=n_ok,
        failures=int(failed.sum()),
        flagged=failed.sum() > 0.05 * replicates,
    )


def run_grid(scenarios, replicates: int, alpha: float = 0.05,
             workers: int = 1) -> list[SimReport]:
    """Run every scenario; deterministic for a fixed grid and seed."""
    return [
        run_scenario(sc, replicates, scenario_index=i, alpha=alpha, workers=workers)
        for i, sc in enumerate(scenarios)
    ]


CSV_HEADER = ("family,error_kind_or_eta,target_s,n,variant,cov_mode,bias,bias_mcse,"
              "coverage,coverage_mcse,mean_width,replicates,failures,seed")


def report_rows(reports) -> list[str]:
    """CSV lines (header first) for a list of reports; full float precision."""
    lines = [CSV_HEADER]
    for rep in reports:
        sc = rep.scenario
        detail = sc.error_kind if sc.family == LINEAR else f"{sc.eta:g}"
        cov_mode = sc.cov_mode if sc.variant in (UNSIGNED, SIGNED) else "classical"
        lines.append(",".join([
            sc.family, detail, repr(sc.target_s), str(sc.n), sc.variant, cov_mode,
            repr(rep.bias), repr(rep.bias_mcse), repr(rep.coverage),
            repr(rep.coverage_mcse), repr(rep.mean_width), str(rep.replicates),
            str(rep.failures), str(sc.seed),
        ]))
    return lines
