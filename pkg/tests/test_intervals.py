"""Truncated/Wald interval construction and the bootstrap comparator."""
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from resikit import ModelFamily, TermSpec, bootstrap_ci, signed_ci, truncated_ci
from resikit.design import ContrastMatrix, DesignMatrix
from resikit.errors import BootstrapInstabilityError, ParameterError, SignedUndefinedError
from resikit.intervals import GAMMA_ADJUSTED, ONE_SIDED, TWO_SIDED
from resikit.resi import SIGNED_Z, UNSIGNED_CHISQ, ResiEstimate


def _unsigned(value, sigma_s, n, m1=1):
    return ResiEstimate(value=value, variant=UNSIGNED_CHISQ, sigma_s=sigma_s,
                        m1=m1, n=n)


def _signed(value, sigma_s, n):
    return ResiEstimate(value=value, variant=SIGNED_Z, sigma_s=sigma_s, m1=1, n=n)


def test_two_sided_branch():
    # SE = 0.05 via sigma_s = 0.05 * sqrt(400)
    est = _unsigned(0.5, 0.05 * math.sqrt(400), 400)
    ci = truncated_ci(est, 0.05)
    assert ci.branch == TWO_SIDED
    assert ci.lower == pytest.approx(0.4020018007729973, abs=1e-6)
    assert ci.upper == pytest.approx(0.5979981992270027, abs=1e-6)


def test_one_sided_branch():
    # gamma = P(chi2_1 > 1) = 0.317... >= alpha/2, so a plain one-sided bound.
    est = _unsigned(0.0, 0.1 * math.sqrt(100), 100)
    ci = truncated_ci(est, 0.05)
    assert ci.branch == ONE_SIDED
    assert ci.lower == 0.0
    assert ci.upper == pytest.approx(0.16448536269514722, abs=1e-6)


def test_gamma_adjusted_branch():
    # gamma = P(chi2_1 > 400 * 0.15^2 + 1) = 0.0015654... < alpha/2.
    est = _unsigned(0.15, 0.09 * math.sqrt(400), 400)
    ci = truncated_ci(est, 0.05)
    assert ci.branch == GAMMA_ADJUSTED
    assert ci.lower == 0.0
    assert ci.upper == pytest.approx(0.29942025073218836, abs=1e-6)


def test_signed_examples():
    ci = signed_ci(_signed(0.0, 1.0, 100), 0.05)
    assert ci.lower == pytest.approx(-0.1959963984540054, abs=1e-9)
    assert ci.upper == pytest.approx(0.1959963984540054, abs=1e-9)
    ci2 = signed_ci(_signed(0.2, 1.1, 100), 0.05)
    assert ci2.lower == pytest.approx(0.2 - 1.959963984540054 * 0.11, abs=1e-9)
    assert ci2.upper == pytest.approx(0.2 + 1.959963984540054 * 0.11, abs=1e-9)


def test_signed_nesting():
    wide = signed_ci(_signed(0.2, 1.1, 100), 0.05)
    narrow = signed_ci(_signed(0.2, 1.1, 100), 0.10)
    assert wide.lower < narrow.lower < narrow.upper < wide.upper


def test_alpha_validation():
    est = _unsigned(0.3, 1.0, 100)
    for alpha in (0.0, 1.0, -0.2, 1.7):
        with pytest.raises(ParameterError):
            truncated_ci(est, alpha)
        with pytest.raises(ParameterError):
            signed_ci(_signed(0.1, 1.0, 50), alpha)


def test_signed_requires_single_df():
    bad = ResiEstimate(value=0.2, variant=UNSIGNED_CHISQ, sigma_s=1.0, m1=2, n=50)
    with pytest.raises(SignedUndefinedError):
        signed_ci(bad, 0.05)


@settings(max_examples=200, deadline=None)
@given(
    value=st.floats(min_value=0.0, max_value=2.0),
    sigma=st.floats(min_value=0.05, max_value=3.0),
    n=st.integers(min_value=20, max_value=5000),
    m1=st.integers(min_value=1, max_value=6),
    alpha=st.floats(min_value=0.01, max_value=0.2),
)
def test_truncated_properties(value, sigma, n, m1, alpha):
    from resikit.special import chi2_sf, normal_quantile

    est = _unsigned(value, sigma, n, m1)
    ci = truncated_ci(est, alpha)
    two_sided_lower = value - normal_quantile(1 - alpha / 2) * est.se
    assert (ci.lower == 0.0) == (two_sided_lower <= 0.0)
    assert ci.lower <= value <= ci.upper
    gamma = chi2_sf(n * value**2 + m1, m1)
    assert 0.0 <= gamma <= 1.0
    if two_sided_lower <= 0.0:
        expected = GAMMA_ADJUSTED if gamma < alpha / 2 else ONE_SIDED
        assert ci.branch == expected
    else:
        assert ci.branch == TWO_SIDED


def _toy_design(n, rng):
    x = rng.binomial(1, 0.5, n).astype(float)
    X = np.column_stack([np.ones(n), x])
    return DesignMatrix(X=X, column_terms=("intercept", "x"),
                        terms=(TermSpec("x", "binary"),))


def test_bootstrap_zero_width_on_degenerate_data():
    rng = np.random.default_rng(32)
    design = _toy_design(40, rng)
    y = np.ones(40)  # exact zero-residual fit in every resample
    L = ContrastMatrix(L=np.array([[0.0, 1.0]]))
    ci = bootstrap_ci(ModelFamily("linear"), design, y, L, "scaled", 0.05,
                      n_boot=120, seed=5)
    assert ci.lower == ci.upper == 0.0


def test_bootstrap_seed_determinism_and_workers():
    rng = np.random.default_rng(33)
    design = _toy_design(120, rng)
    y = 0.5 + 0.8 * design.X[:, 1] + rng.normal(size=120)
    L = ContrastMatrix(L=np.array([[0.0, 1.0]]))
    family = ModelFamily("linear")
    a = bootstrap_ci(family, design, y, L, "unsigned-f", 0.05, n_boot=150, seed=9)
    b = bootstrap_ci(family, design, y, L, "unsigned-f", 0.05, n_boot=150, seed=9)
    c = bootstrap_ci(family, design, y, L, "unsigned-f", 0.05, n_boot=150, seed=9,
                     workers=4)
    assert (a.lower, a.upper) == (b.lower, b.upper) == (c.lower, c.upper)
    d = bootstrap_ci(family, design, y, L, "unsigned-f", 0.05, n_boot=150, seed=10)
    assert (a.lower, a.upper) != (d.lower, d.upper)


def test_bootstrap_needs_100_replicates():
    rng = np.random.default_rng(34)
    design = _toy_design(50, rng)
    y = design.X[:, 1] + rng.normal(size=50)
    L = ContrastMatrix(L=np.array([[0.0, 1.0]]))
    with pytest.raises(ParameterError):
        bootstrap_ci(ModelFamily("linear"), design, y, L, "scaled", 0.05, n_boot=50)


def test_bootstrap_instability_error():
    # A column with a single active row dies in ~37% of resamples (> 10%).
    rng = np.random.default_rng(35)
    n = 40
    rare = np.zeros(n)
    rare[0] = 1.0
    X = np.column_stack([np.ones(n), rng.normal(size=n), rare])
    design = DesignMatrix(X=X, column_terms=("intercept", "x", "rare"),
                          terms=(TermSpec("x", "numeric"), TermSpec("rare", "binary")))
    y = X @ np.array([0.2, 0.7, 0.5]) + rng.normal(size=n)
    L = ContrastMatrix(L=np.array([[0.0, 1.0, 0.0]]))
    with pytest.raises(BootstrapInstabilityError):
        bootstrap_ci(ModelFamily("linear"), design, y, L, "scaled", 0.05,
                     n_boot=200, seed=3)


def test_bootstrap_interval_orders_endpoints():
    rng = np.random.default_rng(36)
    design = _toy_design(200, rng)
    y = 0.2 + 1.1 * design.X[:, 1] + rng.normal(size=200)
    L = ContrastMatrix(L=np.array([[0.0, 1.0]]))
    ci = bootstrap_ci(ModelFamily("linear"), design, y, L, "signed-t", 0.05,
                      n_boot=200, seed=11)
    assert ci.lower <= ci.upper
    assert ci.method == "bootstrap-percentile"
