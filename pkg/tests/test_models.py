"""Estimating-equation fits, bread/meat plug-ins, covariance estimators."""
import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from resikit import ModelFamily, TermSpec, build_design, covariance, fit
from resikit.design import DesignMatrix
from resikit.errors import (
    SchemaError,
    SeparationError,
    SingularSystemError,
    UnsupportedFlavorError,
)
from resikit.models import bread_at, meat_at, score_at

TWO_POINT = DesignMatrix(
    X=np.array([[1.0, 0.0], [1.0, 1.0], [1.0, 0.0], [1.0, 1.0],
                [1.0, 0.0], [1.0, 1.0], [1.0, 0.0], [1.0, 1.0],
                [1.0, 0.0], [1.0, 1.0]]),
    column_terms=("intercept", "x"),
    terms=(TermSpec("x", "binary"),),
)


def _linear_toy():
    y = np.tile([1.0, 3.0], 5)
    return fit(ModelFamily("linear"), TWO_POINT, y)


def test_exact_interpolation():
    model = _linear_toy()
    assert_allclose(model.theta, [1.0, 2.0], atol=1e-12)
    assert_allclose(model.residuals, 0.0, atol=1e-12)


def test_dispersion_zero_on_noiseless_data():
    y = np.tile([1.0, 3.0], 5)
    model = fit(ModelFamily("linear"), TWO_POINT, y, cov_mode="model")
    assert model.phi == pytest.approx(0.0, abs=1e-24)
    assert model.theta.shape == (3,)
    assert model.theta[-1] == pytest.approx(0.0, abs=1e-24)


def test_perfect_separation_raises():
    y = TWO_POINT.X[:, 1].copy()
    with pytest.raises(SeparationError):
        fit(ModelFamily("logistic"), TWO_POINT, y)


def test_logistic_rejects_non_binary():
    with pytest.raises(SchemaError):
        fit(ModelFamily("logistic"), TWO_POINT, np.linspace(0, 2, 10))


def test_rank_deficient_design():
    X = np.column_stack([np.ones(8), np.arange(8.0), 2 * np.arange(8.0)])
    design = DesignMatrix(X=X, column_terms=("intercept", "a", "b"),
                          terms=(TermSpec("a", "numeric"), TermSpec("b", "numeric")))
    with pytest.raises(SingularSystemError):
        fit(ModelFamily("linear"), design, np.arange(8.0))


def test_bread_two_point():
    # Mean of x_i x_i' over rows [1,0] and [1,1] in equal proportion.
    model = _linear_toy()
    assert_allclose(model.bread, [[1.0, 0.5], [0.5, 0.5]], atol=1e-14)


def test_logistic_bread_at_null():
    x = np.array([0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0])
    design = DesignMatrix(X=np.column_stack([np.ones(8), x]),
                          column_terms=("intercept", "x"),
                          terms=(TermSpec("x", "binary"),))
    y = np.array([0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0])  # balanced per level
    model = fit(ModelFamily("logistic"), design, y)
    assert_allclose(model.theta, 0.0, atol=1e-12)
    assert_allclose(model.bread, 0.25 * design.X.T @ design.X / 8, atol=1e-12)


@pytest.mark.parametrize("family,cov_mode", [("linear", "robust"),
                                             ("linear", "model"),
                                             ("logistic", "robust")])
def test_bread_matches_score_jacobian(family, cov_mode):
    rng = np.random.default_rng(11)
    n = 120
    x = rng.normal(size=n)
    g = rng.binomial(1, 0.5, n).astype(float)
    design = build_design({"x": x, "g": g},
                          [TermSpec("x", "numeric"), TermSpec("g", "binary")])
    if family == "linear":
        y = 0.5 + 0.7 * x - 0.4 * g + rng.normal(size=n)
    else:
        y = rng.binomial(1, 1 / (1 + np.exp(-(0.2 + 0.6 * x - 0.3 * g)))).astype(float)
    model = fit(ModelFamily(family), design, y, cov_mode=cov_mode)
    # Central-difference Jacobian of the mean estimating function.
    step = 1e-6
    m = model.m
    jac = np.zeros((m, m))
    for k in range(m):
        tp = model.theta.copy()
        tm = model.theta.copy()
        tp[k] += step
        tm[k] -= step
        jac[:, k] = (score_at(model, tp) - score_at(model, tm)) / (2 * step)
    assert_allclose(model.bread, -jac, rtol=1e-6, atol=1e-8)


def test_meat_zero_when_residuals_zero():
    model = _linear_toy()
    assert_allclose(model.meat, 0.0, atol=1e-20)


def test_meat_hc0_toy():
    X = np.array([[1.0, 0.0], [1.0, 1.0]])
    resid = np.array([1.0, -1.0])
    psi = X * resid[:, None]
    expected = (np.outer(psi[0], psi[0]) + np.outer(psi[1], psi[1])) / 2
    assert_allclose(expected, [[1.0, 0.5], [0.5, 0.5]])
    # Same numbers through the fitted pipeline: y chosen so the fit is zero
    # and every squared residual is one.
    design = DesignMatrix(X=np.vstack([X, X]), column_terms=("intercept", "x"),
                          terms=(TermSpec("x", "binary"),))
    y = np.array([1.0, -1.0, -1.0, 1.0])
    model = fit(ModelFamily("linear"), design, y, flavor="hc0")
    assert_allclose(model.theta, 0.0, atol=1e-14)
    assert_allclose(model.meat, [[1.0, 0.5], [0.5, 0.5]], atol=1e-14)


def test_hc3_equals_scaled_hc0_in_balanced_design():
    rng = np.random.default_rng(12)
    n = 40  # two groups of 20: every leverage equals 2/n
    x = np.repeat([0.0, 1.0], n // 2)
    design = DesignMatrix(X=np.column_stack([np.ones(n), x]),
                          column_terms=("intercept", "x"),
                          terms=(TermSpec("x", "binary"),))
    y = 0.3 + 0.9 * x + rng.normal(size=n)
    model = fit(ModelFamily("linear"), design, y, flavor="hc3")
    assert_allclose(model.leverages, 2.0 / n, atol=1e-12)
    from resikit.models import meat

    hc0 = meat(model, "hc0")
    assert_allclose(model.meat, hc0 / (1.0 - 2.0 / n) ** 2, rtol=1e-12)


def test_hc3_for_logistic_rejected():
    y = np.tile([0.0, 1.0], 5)
    with pytest.raises(UnsupportedFlavorError):
        fit(ModelFamily("logistic"), TWO_POINT, y, flavor="hc3")


def test_logistic_model_based_inverts_bread():
    rng = np.random.default_rng(13)
    n = 150
    x = rng.normal(size=n)
    design = build_design({"x": x}, [TermSpec("x", "numeric")])
    y = rng.binomial(1, 1 / (1 + np.exp(-(0.3 + 0.8 * x)))).astype(float)
    model = fit(ModelFamily("logistic"), design, y, cov_mode="model")
    sigma = covariance(model).sigma_theta
    assert_allclose(sigma @ model.bread, np.eye(2), atol=1e-10)


def test_sandwich_reconstruction_exact():
    rng = np.random.default_rng(14)
    n = 200
    x = rng.normal(size=n)
    design = build_design({"x": x}, [TermSpec("x", "numeric")])
    y = 1.0 + 0.5 * x + rng.normal(size=n)
    model = fit(ModelFamily("linear"), design, y)
    sigma = covariance(model).sigma_theta
    A_inv = np.linalg.inv(model.bread)
    assert_allclose(sigma, A_inv @ model.meat @ A_inv, rtol=1e-12)


def test_estimating_equation_solved():
    rng = np.random.default_rng(15)
    n = 300
    x = rng.normal(size=n)
    design = build_design({"x": x}, [TermSpec("x", "numeric")])
    y_lin = 0.2 + 0.9 * x + rng.normal(size=n)
    lin = fit(ModelFamily("linear"), design, y_lin, cov_mode="model")
    assert np.max(np.abs(score_at(lin, lin.theta))) < 1e-8
    y_log = rng.binomial(1, 1 / (1 + np.exp(-(0.1 + 0.7 * x)))).astype(float)
    log = fit(ModelFamily("logistic"), design, y_log)
    assert np.max(np.abs(score_at(log, log.theta))) < 1e-10


def test_robust_close_to_model_based_when_homoskedastic():
    rng = np.random.default_rng(16)
    n = 10_000
    x = rng.binomial(1, 0.4, n).astype(float)
    design = DesignMatrix(X=np.column_stack([np.ones(n), x]),
                          column_terms=("intercept", "x"),
                          terms=(TermSpec("x", "binary"),))
    y = 1.0 + 0.5 * x + rng.normal(0, 1.0, n)
    robust = covariance(fit(ModelFamily("linear"), design, y)).sigma_theta
    model_based = covariance(
        fit(ModelFamily("linear", include_dispersion=False), design, y,
            cov_mode="model")
    ).sigma_theta
    assert np.all(np.abs(robust / model_based - 1.0) < 0.10)


def test_logistic_robust_close_to_model_based_when_correct():
    rng = np.random.default_rng(17)
    n = 20_000
    x = rng.normal(size=n)
    design = build_design({"x": x}, [TermSpec("x", "numeric")])
    y = rng.binomial(1, 1 / (1 + np.exp(-(0.2 + 0.6 * x)))).astype(float)
    robust = covariance(fit(ModelFamily("logistic"), design, y)).sigma_theta
    model_based = covariance(
        fit(ModelFamily("logistic"), design, y, cov_mode="model")
    ).sigma_theta
    assert np.all(np.abs(robust / model_based - 1.0) < 0.10)


def test_two_group_heteroskedastic_slope_variance():
    # Robust slope variance approaches sigma1^2/p + sigma0^2/(1-p); the
    # model-based (pooled) form stays away from it.
    rng = np.random.default_rng(18)
    n = 40_000
    p, s0, s1 = 0.4, 1.111, 3.333
    x = rng.binomial(1, p, n).astype(float)
    y = 0.7 * x + rng.normal(size=n) * np.where(x == 1.0, s1, s0)
    design = DesignMatrix(X=np.column_stack([np.ones(n), x]),
                          column_terms=("intercept", "x"),
                          terms=(TermSpec("x", "binary"),))
    target = s1**2 / p + s0**2 / (1 - p)
    robust = covariance(fit(ModelFamily("linear"), design, y)).sigma_theta[1, 1]
    assert abs(robust / target - 1.0) < 0.05
    model_based = covariance(
        fit(ModelFamily("linear", include_dispersion=False), design, y,
            cov_mode="model")
    ).sigma_theta[1, 1]
    pooled = p * s1**2 + (1 - p) * s0**2
    assert abs(model_based / (pooled / (p * (1 - p))) - 1.0) < 0.05
    assert abs(model_based / target - 1.0) > 0.2


def test_outcome_scaling_property():
    rng = np.random.default_rng(19)
    n = 80
    x = rng.normal(size=n)
    design = build_design({"x": x}, [TermSpec("x", "numeric")])
    y = 0.4 + 1.1 * x + rng.normal(size=n)
    base = fit(ModelFamily("linear"), design, y)
    scaled = fit(ModelFamily("linear"), design, 3.0 * y)
    assert_allclose(scaled.theta, 3.0 * base.theta, rtol=1e-12)


def test_json_round_fields():
    model = _linear_toy()
    payload = json.loads(model.to_json())
    assert set(payload) == {"theta", "bread", "meat", "cov_mode", "n"}
    assert payload["n"] == 10
    assert_allclose(payload["theta"], [1.0, 2.0])


def test_recompute_at_solution_matches_stored():
    rng = np.random.default_rng(20)
    n = 100
    x = rng.normal(size=n)
    design = build_design({"x": x}, [TermSpec("x", "numeric")])
    y = rng.binomial(1, 1 / (1 + np.exp(-(0.1 + 0.5 * x)))).astype(float)
    model = fit(ModelFamily("logistic"), design, y)
    assert_allclose(bread_at(model, model.theta), model.bread, rtol=1e-12)
    assert_allclose(meat_at(model, model.theta), model.meat, rtol=1e-12)
