"""Estimating-equation model families: linear and logistic regression.

Fits solve the sample mean estimating equation (closed form for linear,
damped Newton for logistic) and carry the plug-in bread/meat matrices for
sandwich or model-based covariance estimation. The linear model-based mode
appends the dispersion to the parameter vector via psi_phi = r^2 - phi so
that downstream variance calculations propagate dispersion uncertainty.
"""
import json
from dataclasses import dataclass

import numpy as np

from . import _backend
from .design import DesignMatrix
from .errors import (
    IllConditionedError,
    SchemaError,
    SeparationError,
    SingularSystemError,
    UnsupportedFlavorError,
)

LINEAR = "linear"
LOGISTIC = "logistic"
ROBUST = "robust"
MODEL_BASED = "model"
HC0 = "hc0"
HC3 = "hc3"

_SATURATION = 1e-10
_SCORE_TOL = 1e-10
_MAX_NEWTON = 100
_MAX_HALVINGS = 30
_COND_LIMIT = 1e12


@dataclass(frozen=True)
class ModelFamily:
    """Model family; ``include_dispersion`` controls whether the linear
    model-based mode carries phi inside theta (ignored by robust fits)."""

    kind: str
    include_dispersion: bool | None = None

    def __post_init__(self):
        if self.kind not in (LINEAR, LOGISTIC):
            raise SchemaError(f"unknown family {self.kind!r}")
        if self.include_dispersion is None:
            object.__setattr__(self, "include_dispersion", self.kind == LINEAR)
        if self.include_dispersion and self.kind != LINEAR:
            raise SchemaError("dispersion parameter only applies to the linear family")


@dataclass(frozen=True)
class FittedModel:
    """Solved estimating equation with its plug-in bread/meat matrices.

    ``theta`` holds the regression coefficients, plus phi (the mean squared
    residual, denominator n) appended when the linear model-based mode
    carries dispersion. ``meat`` is the selected-flavor meat for robust fits
    and the plain HC0 meat otherwise.
    """

    family: ModelFamily
    design: DesignMatrix
    y: np.ndarray
    theta: np.ndarray
    bread: np.ndarray
    meat: np.ndarray
    cov_mode: str
    flavor: str | None
    residuals: np.ndarray | None = None
    leverages: np.ndarray | None = None
    mu: np.ndarray | None = None
    phi: float | None = None  # estimating-equation solution, denominator n

    @property
    def n(self) -> int:
        return self.design.n

    @property
    def m(self) -> int:
        return self.theta.shape[0]

    @property
    def n_coef(self) -> int:
        return self.design.m

    @property
    def dispersion_in_theta(self) -> bool:
        return self.m == self.n_coef + 1

    @property
    def coef(self) -> np.ndarray:
        return self.theta[: self.n_coef]

    @property
    def phi_unbiased(self) -> float:
        """Mean squared residual with denominator n - m (point-estimate form)."""
        if self.residuals is None:
            raise UnsupportedFlavorError("dispersion defined for the linear family only")
        return float(self.residuals @ self.residuals / (self.n - self.n_coef))

    def to_json(self) -> str:
        return json.dumps(
            {
                "theta": self.theta.tolist(),
                "bread": self.bread.tolist(),
                "meat": self.meat.tolist(),
                "cov_mode": self.cov_mode,
                "n": self.n,
            }
        )


@dataclass(frozen=True)
class CovarianceEstimate:
    """Estimated covariance of sqrt(n) (theta_hat - theta)."""

    sigma_theta: np.ndarray
    mode: str


def default_flavor(kind: str) -> str:
    return HC3 if kind == LINEAR else HC0


def fit(family: ModelFamily, design: DesignMatrix, y, cov_mode: str = ROBUST,
        flavor: str | None = None) -> FittedModel:
    """Solve the sample estimating equation for the given family.

    Linear coefficients solve the normal equations in closed form; logistic
    coefficients use damped Newton on the mean score (tolerance 1e-10 on the
    max-abs score, at most 100 iterations with up to 30 step halvings).
    """
    X = design.X
    y = np.asarray(y, dtype=float)
    if y.shape != (design.n,):
        raise SchemaError(f"outcome length {y.shape} does not match n={design.n}")
    if cov_mode not in (ROBUST, MODEL_BASED):
        raise SchemaError(f"cov_mode must be {ROBUST!r} or {MODEL_BASED!r}")
    if flavor is None:
        flavor = default_flavor(family.kind) if cov_mode == ROBUST else HC0
    if flavor == HC3 and family.kind != LINEAR:
        raise UnsupportedFlavorError(
            "HC3 leverage adjustment is defined for the linear family only"
        )

    if family.kind == LINEAR:
        try:
            beta, resid, lev = _backend.linear_solve(X, y)
        except np.linalg.LinAlgError:
            raise SingularSystemError("design matrix is rank deficient")
        phi = float(resid @ resid / design.n)
        with_phi = cov_mode == MODEL_BASED and family.include_dispersion
        theta = np.append(beta, phi) if with_phi else beta
        bread = _linear_bread(X, resid, with_phi)
        meat = _linear_meat(X, resid, lev, phi, with_phi, flavor)
        return FittedModel(
            family=family, design=design, y=y, theta=theta, bread=bread,
            meat=meat, cov_mode=cov_mode, flavor=flavor, residuals=resid,
            leverages=lev, phi=phi,
        )

    if not np.isin(y, (0.0, 1.0)).all():
        raise SchemaError("logistic outcome must be coded 0/1")
    try:
        beta, mu, _, converged = _backend.logistic_solve(
            X, y, _SCORE_TOL, _MAX_NEWTON, _MAX_HALVINGS
        )
    except np.linalg.LinAlgError:
        raise SingularSystemError("singular weighted normal equations in Newton step")
    if not converged:
        raise SeparationError("logistic score iterations did not converge")
    if np.any(mu < _SATURATION) or np.any(mu > 1.0 - _SATURATION):
        raise SeparationError("fitted probabilities at 0/1 indicate separation")
    bread = _backend.weighted_gram(X, mu * (1.0 - mu))
    meat = _backend.weighted_gram(X, (y - mu) ** 2)
    return FittedModel(
        family=family, design=design, y=y, theta=beta, bread=bread, meat=meat,
        cov_mode=cov_mode, flavor=flavor, mu=mu,
    )


def _linear_bread(X, resid, with_phi):
    n = X.shape[0]
    A_c = _backend.weighted_gram(X, np.ones(n))
    if not with_phi:
        return A_c
    m = A_c.shape[0] + 1
    A = np.zeros((m, m))
    A[:-1, :-1] = A_c
    A[-1, :-1] = 2.0 * (X.T @ resid) / n  # ~0 at the solution, kept as computed
    A[-1, -1] = 1.0
    return A


def _linear_meat(X, resid, lev, phi, with_phi, flavor):
    n = X.shape[0]
    if with_phi:
        # Joint HC0 meat over (coefficients, phi).
        m = X.shape[1] + 1
        B = np.zeros((m, m))
        B[:-1, :-1] = _backend.weighted_gram(X, resid**2)
        psi_phi = resid**2 - phi
        B[:-1, -1] = X.T @ (resid * psi_phi) / n
        B[-1, :-1] = B[:-1, -1]
        B[-1, -1] = psi_phi @ psi_phi / n
        return B
    if flavor == HC3:
        if np.max(lev) >= 1.0 - 1e-8:
            raise SingularSystemError(
                "leverage-one observation: HC3 residual deflation is undefined"
            )
        scaled = resid / (1.0 - lev)
    else:
        scaled = resid
    return _backend.weighted_gram(X, scaled**2)


def bread(model: FittedModel) -> np.ndarray:
    """Negative mean score Jacobian at the solution."""
    return model.bread


def meat(model: FittedModel, flavor: str | None = None) -> np.ndarray:
    """Mean outer product of the estimating function, per HC flavor."""
    if flavor is None or flavor == model.flavor:
        return model.meat
    if flavor == HC3 and model.family.kind != LINEAR:
        raise UnsupportedFlavorError(
            "HC3 leverage adjustment is defined for the linear family only"
        )
    if model.dispersion_in_theta:
        raise UnsupportedFlavorError(
            "flavored meat is not defined for the joint (coefficients, phi) equation"
        )
    if model.family.kind == LINEAR:
        return _linear_meat(model.design.X, model.residuals, model.leverages,
                            model.phi, False, flavor)
    return model.meat


def covariance(model: FittedModel) -> CovarianceEstimate:
    """Covariance of sqrt(n) theta_hat: sandwich (robust) or model-based."""
    A = model.bread
    if np.linalg.cond(A) > _COND_LIMIT:
        raise IllConditionedError("bread matrix is numerically singular")
    if model.cov_mode == ROBUST:
        A_inv = np.linalg.inv(A)
        return CovarianceEstimate(sigma_theta=A_inv @ model.meat @ A_inv, mode=ROBUST)
    if model.family.kind == LOGISTIC:
        return CovarianceEstimate(sigma_theta=np.linalg.inv(A), mode=MODEL_BASED)
    # Linear quasi-likelihood form: phi_hat (n-m denominator) times the
    # inverse coefficient block; the phi component, when present, carries the
    # normal-model variance of sqrt(n) phi_hat.
    phi_u = model.phi_unbiased
    mc = model.n_coef
    cov_c = phi_u * np.linalg.inv(A[:mc, :mc])
    if not model.dispersion_in_theta:
        return CovarianceEstimate(sigma_theta=cov_c, mode=MODEL_BASED)
    sigma = np.zeros((mc + 1, mc + 1))
    sigma[:mc, :mc] = cov_c
    sigma[mc, mc] = 2.0 * phi_u**2
    return CovarianceEstimate(sigma_theta=sigma, mode=MODEL_BASED)


def bread_at(model: FittedModel, theta: np.ndarray) -> np.ndarray:
    """Recompute the bread on the fitted sample at an arbitrary theta."""
    X = model.design.X
    if model.family.kind == LINEAR:
        resid = model.y - X @ theta[: model.n_coef]
        return _linear_bread(X, resid, theta.shape[0] == model.n_coef + 1)
    mu = _expit(X @ theta)
    return _backend.weighted_gram(X, mu * (1.0 - mu))


def meat_at(model: FittedModel, theta: np.ndarray) -> np.ndarray:
    """Recompute the selected-flavor meat on the fitted sample at theta.

    HC3 keeps the leverages fixed (they depend on X only).
    """
    X = model.design.X
    if model.family.kind == LINEAR:
        resid = model.y - X @ theta[: model.n_coef]
        if theta.shape[0] == model.n_coef + 1:
            return _linear_meat(X, resid, model.leverages, theta[-1], True, HC0)
        return _linear_meat(X, resid, model.leverages, None, False, model.flavor)
    mu = _expit(X @ theta)
    return _backend.weighted_gram(X, (model.y - mu) ** 2)


def score_at(model: FittedModel, theta: np.ndarray) -> np.ndarray:
    """Mean estimating function at theta (zero at the solution)."""
    X = model.design.X
    n = model.n
    if model.family.kind == LINEAR:
        resid = model.y - X @ theta[: model.n_coef]
        score = X.T @ resid / n
        if theta.shape[0] == model.n_coef + 1:
            score = np.append(score, np.mean(resid**2) - theta[-1])
        return score
    mu = _expit(X @ theta)
    return X.T @ (model.y - mu) / n


def _expit(t):
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out
