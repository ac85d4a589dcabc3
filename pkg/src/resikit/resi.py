"""Robust effect size estimation and its delta-method asymptotic variance.

The effect size is the square root of the Wald noncentrality per
observation, standardized by the covariance of the tested coefficients. Its
sampling variance is obtained from the total derivative of the plug-in map
theta -> S(theta), which recomputes the bread/meat matrices on the fitted
sample, so the variance accounts for their dependence on theta.
"""
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from . import _backend
from .design import ContrastMatrix
from .errors import (
    BoundaryGradientError,
    IllConditionedError,
    InsufficientDfError,
    SignedUndefinedError,
)
from .models import (
    HC3,
    LINEAR,
    MODEL_BASED,
    ROBUST,
    CovarianceEstimate,
    FittedModel,
    bread_at,
    covariance,
    meat_at,
)

UNSIGNED_CHISQ = "unsigned-chisq"
SIGNED_Z = "signed-z"
SCALED = "scaled"
UNSIGNED_F = "unsigned-f"
SIGNED_T = "signed-t"

_BOUNDARY_TOL = 1e-8


@dataclass(frozen=True)
class WaldStatistics:
    """Wald-type statistics for H0: beta = beta0 under the selected covariance."""

    t_squared: float
    m1: int
    n: int
    m: int  # regression coefficient count (dispersion excluded)
    z: float | None = None  # m1 = 1 only
    f_stat: float | None = None  # linear family only
    t_stat: float | None = None  # linear family, m1 = 1


@dataclass(frozen=True)
class ResiEstimate:
    """Point estimate of the effect size with its asymptotic scale."""

    value: float
    variant: str
    sigma_s: float
    m1: int
    n: int

    @property
    def se(self) -> float:
        return self.sigma_s / math.sqrt(self.n)


@dataclass(frozen=True)
class DerivativeBundle:
    """Pieces of the total derivative of the plug-in effect-size map.

    ``dadtheta``/``dbdtheta`` have one row per parameter holding the vec'd
    derivative of the bread/meat (column-major; all matrices involved are
    symmetric, so the layout is immaterial).
    """

    dsdtheta: np.ndarray
    dsda: np.ndarray
    dsdb: np.ndarray
    dadtheta: np.ndarray
    dbdtheta: np.ndarray

    def total(self) -> np.ndarray:
        return self.dsdtheta + self.dadtheta @ self.dsda + self.dbdtheta @ self.dsdb


def _spd_solve(mat, rhs):
    try:
        return cho_solve(cho_factor(mat, lower=True), rhs)
    except Exception:
        raise IllConditionedError("covariance submatrix is not positive definite")


def wald_statistics(model: FittedModel, cov: CovarianceEstimate, L: ContrastMatrix,
                    beta0=None) -> WaldStatistics:
    """T^2 = n (beta_hat - beta0)' Sigma_beta^-1 (beta_hat - beta0) and friends."""
    Lmat = L.L
    m1 = L.m1
    mc = model.n_coef
    beta_hat = Lmat @ model.coef
    delta = beta_hat if beta0 is None else beta_hat - np.asarray(beta0, dtype=float)
    sigma_beta = Lmat @ cov.sigma_theta[:mc, :mc] @ Lmat.T
    zero_tol = 1e-10 * max(1.0, float(np.max(np.abs(model.coef))))
    if np.max(np.abs(delta)) <= zero_tol:
        # Zero quadratic form in any metric; avoids inverting a covariance
        # that degenerates together with the estimate (exact-fit data).
        t2, z = 0.0, (0.0 if m1 == 1 else None)
    else:
        t2 = float(model.n * delta @ _spd_solve(sigma_beta, delta))
        z = None
        if m1 == 1:
            z = float(delta[0] / math.sqrt(sigma_beta[0, 0] / model.n))
    f_stat = t_stat = None
    if model.family.kind == LINEAR:
        f_stat = t2 / m1
        if m1 == 1:
            t_stat = z
    return WaldStatistics(t_squared=t2, m1=m1, n=model.n, m=mc, z=z,
                          f_stat=f_stat, t_stat=t_stat)


def resi_unsigned(stats: WaldStatistics, sigma_s: float = 1.0) -> ResiEstimate:
    """Chi-square-based unsigned estimator sqrt(max(0, (T^2 - m1)/n))."""
    value = math.sqrt(max(0.0, (stats.t_squared - stats.m1) / stats.n))
    return ResiEstimate(value=value, variant=UNSIGNED_CHISQ, sigma_s=sigma_s,
                        m1=stats.m1, n=stats.n)


def resi_signed(stats: WaldStatistics, sigma_s: float = 1.0) -> ResiEstimate:
    """Z-based signed estimator Z/sqrt(n); single-df hypotheses only."""
    if stats.m1 != 1 or stats.z is None:
        raise SignedUndefinedError(f"signed effect size needs m1=1, got m1={stats.m1}")
    return ResiEstimate(value=stats.z / math.sqrt(stats.n), variant=SIGNED_Z,
                        sigma_s=sigma_s, m1=stats.m1, n=stats.n)


def resi_scaled(stats: WaldStatistics, sigma_s: float = 1.0) -> ResiEstimate:
    """Scaled estimator sqrt(T^2/n), the plug-in the variance engine targets."""
    return ResiEstimate(value=math.sqrt(stats.t_squared / stats.n), variant=SCALED,
                        sigma_s=sigma_s, m1=stats.m1, n=stats.n)


def resi_f(stats: WaldStatistics, sigma_s: float = 1.0) -> ResiEstimate:
    """F-based unsigned estimator for linear models."""
    if stats.f_stat is None:
        raise SignedUndefinedError("F-based estimator requires the linear family")
    n, m, m1 = stats.n, stats.m, stats.m1
    if n <= m + 2:
        raise InsufficientDfError(f"need n > m + 2, got n={n}, m={m}")
    value = math.sqrt(max(0.0, (stats.f_stat * m1 * (n - m - 2) - m1 * (n - m))
                          / (n * (n - m))))
    return ResiEstimate(value=value, variant=UNSIGNED_F, sigma_s=sigma_s, m1=m1, n=n)


def resi_t(stats: WaldStatistics, sigma_s: float = 1.0) -> ResiEstimate:
    """t-based signed estimator for linear models; log-gamma stabilized."""
    if stats.t_stat is None:
        raise SignedUndefinedError("t-based estimator requires linear family and m1=1")
    n, m = stats.n, stats.m
    if n <= m + 2:
        raise InsufficientDfError(f"need n > m + 2, got n={n}, m={m}")
    log_ratio = math.lgamma((n - m) / 2.0) - math.lgamma((n - m - 1) / 2.0)
    value = stats.t_stat * math.sqrt(2.0) * math.exp(log_ratio) / math.sqrt(n * (n - m))
    return ResiEstimate(value=value, variant=SIGNED_T, sigma_s=sigma_s, m1=1, n=n)


def _engine_parts(model: FittedModel, L: ContrastMatrix, mode: str, theta: np.ndarray):
    """Sigma_beta and helper matrices of the plug-in map at theta."""
    mc = model.n_coef
    Lc = L.L
    u = Lc @ theta[:mc]
    if mode == ROBUST:
        if model.dispersion_in_theta:
            raise IllConditionedError(
                "robust variance needs a robust fit (theta without dispersion)"
            )
        A = model.bread if theta is model.theta else bread_at(model, theta)
        B = model.meat if theta is model.theta else meat_at(model, theta)
        A_inv = np.linalg.inv(A)
        P = Lc @ A_inv
        Q = Lc @ (A_inv @ B @ A_inv)
        sigma_beta = Q @ Lc.T
        return sigma_beta, u, P, Q, 1.0
    # Model-based: Sigma_beta = phi * L A_c(theta)^-1 L' with phi = 1 for
    # logistic and the dispersion component (or its fitted value) for linear.
    A = model.bread if theta is model.theta else bread_at(model, theta)
    A_c = A[:mc, :mc]
    A_inv = np.linalg.inv(A_c)
    P = Lc @ A_inv
    if model.family.kind == LINEAR:
        phi = float(theta[mc]) if theta.shape[0] == mc + 1 else model.phi
    else:
        phi = 1.0
    sigma_beta = phi * (P @ Lc.T)
    return sigma_beta, u, P, None, phi


def effect_size_at(model: FittedModel, L: ContrastMatrix, theta=None,
                   mode: str | None = None, signed: bool = False) -> float:
    """Plug-in effect size at theta, recomputing bread/meat on the sample."""
    if theta is None:
        theta = model.theta
    theta = np.asarray(theta, dtype=float)
    if mode is None:
        mode = model.cov_mode
    sigma_beta, u, _, _, _ = _engine_parts(model, L, mode, theta)
    if signed:
        if L.m1 != 1:
            raise SignedUndefinedError(f"signed effect size needs m1=1, got {L.m1}")
        return float(u[0] / math.sqrt(sigma_beta[0, 0]))
    return float(math.sqrt(u @ _spd_solve(sigma_beta, u)))


def derivative_bundle(model: FittedModel, L: ContrastMatrix, mode: str | None = None,
                      signed: bool = False) -> DerivativeBundle:
    """Analytic total-derivative pieces of the plug-in map at the fitted theta.

    Raises ``BoundaryGradientError`` in unsigned mode when the effect size is
    numerically zero (its gradient is undefined there; callers fall back to
    the unit null variance).
    """
    if mode is None:
        mode = model.cov_mode
    if signed and L.m1 != 1:
        raise SignedUndefinedError(f"signed effect size needs m1=1, got {L.m1}")
    theta = model.theta
    m = model.m
    mc = model.n_coef
    m1 = L.m1
    Lc = L.L
    X = model.design.X
    n = model.n

    sigma_beta, u, P, Q, phi = _engine_parts(model, L, mode, theta)
    s_tilde = math.sqrt(max(0.0, float(u @ _spd_solve(sigma_beta, u))))
    if not signed and s_tilde <= _BOUNDARY_TOL / math.sqrt(m1):
        raise BoundaryGradientError(
            f"effect size {s_tilde:.2e} at the boundary; gradient undefined"
        )

    # Partial wrt theta and the matrix partials MA = dS/dA, MB = dS/dB
    # (coefficient block); the model-based map depends on the bread only
    # through phi * (L A_c^-1 L')^-1, hence the phi factor on MA.
    if signed:
        s = math.sqrt(sigma_beta[0, 0])
        dpart_c = Lc[0] / s
        scale = float(u[0]) / (2.0 * s**3)
        MB = None if mode == MODEL_BASED else -scale * (P.T @ P)
        if mode == MODEL_BASED:
            MA = phi * scale * (P.T @ P)
        else:
            MA = scale * (Q.T @ P + P.T @ Q)
        s_for_phi = float(u[0]) / s
    else:
        w = _spd_solve(sigma_beta, u)
        dpart_c = (Lc.T @ w) / s_tilde
        C = np.outer(w, w)
        half = 1.0 / (2.0 * s_tilde)
        MB = None if mode == MODEL_BASED else -half * (P.T @ C @ P)
        if mode == MODEL_BASED:
            MA = phi * half * (P.T @ C @ P)
        else:
            MA = half * (Q.T @ C @ P + P.T @ C @ Q)
        s_for_phi = s_tilde

    dsdtheta = np.zeros(m)
    dsdtheta[:mc] = dpart_c
    if m == mc + 1:  # linear model-based with dispersion in theta
        dsdtheta[mc] = -s_for_phi / (2.0 * phi)

    dsda = np.zeros(m * m)
    dsda_block = np.zeros((m, m))
    dsda_block[:mc, :mc] = MA
    dsda[:] = dsda_block.reshape(m * m)

    dadtheta = np.zeros((m, m * m))
    dbdtheta = np.zeros((m, m * m))
    dsdb = np.zeros(m * m)

    if model.family.kind == LINEAR:
        if mode == ROBUST:
            g = model.residuals
            if model.flavor == HC3:
                g = g / (1.0 - model.leverages) ** 2
            dbdtheta[:mc, :] = _embed_tensor(
                _backend.cubic_moment(X, -2.0 * g), m, mc
            )
            dsdb[:] = MB.reshape(m * m)
        else:
            # Joint-bread cross row (2/n) sum r_i x_i' varies with the
            # coefficients; the map never reads those entries (dS/dA is zero
            # there) but the tensor reports them as computed.
            if m == mc + 1:
                gram = _backend.weighted_gram(X, np.ones(n))
                for k in range(mc):
                    block = np.zeros((m, m))
                    block[mc, :mc] = -2.0 * gram[k]
                    dadtheta[k] = block.reshape(m * m)
    else:
        w_mu = model.mu * (1.0 - model.mu)
        dadtheta[:mc, :] = _embed_tensor(
            _backend.cubic_moment(X, w_mu * (1.0 - 2.0 * model.mu)), m, mc
        )
        if mode == ROBUST:
            dbdtheta[:mc, :] = _embed_tensor(
                _backend.cubic_moment(X, -2.0 * (model.y - model.mu) * w_mu), m, mc
            )
            dsdb[:] = MB.reshape(m * m)

    return DerivativeBundle(dsdtheta=dsdtheta, dsda=dsda, dsdb=dsdb,
                            dadtheta=dadtheta, dbdtheta=dbdtheta)


def _embed_tensor(tensor_c, m, mc):
    """Embed an (mc, mc*mc) tensor into the (mc rows, m*m columns) layout."""
    if m == mc:
        return tensor_c
    out = np.zeros((mc, m * m))
    block = np.zeros((m, m))
    for k in range(mc):
        block[:mc, :mc] = tensor_c[k].reshape(mc, mc)
        out[k] = block.reshape(m * m)
    return out


def _engine_sigma_theta(model: FittedModel, mode: str) -> np.ndarray:
    """Outer covariance for the variance quadratic form.

    Robust mode uses the sandwich; model-based uses the inverse bread for
    logistic and, for linear, the dispersion-scaled inverse coefficient
    block with the normal-model variance 2 phi^2 for the phi component
    (internally consistent with the denominator-n dispersion).
    """
    if mode == ROBUST:
        A_inv = np.linalg.inv(model.bread)
        return A_inv @ model.meat @ A_inv
    if model.family.kind != LINEAR:
        return np.linalg.inv(model.bread)
    mc = model.n_coef
    phi = model.phi
    cov_c = phi * np.linalg.inv(model.bread[:mc, :mc])
    if model.m == mc:
        return cov_c
    sigma = np.zeros((mc + 1, mc + 1))
    sigma[:mc, :mc] = cov_c
    sigma[mc, mc] = 2.0 * phi**2
    return sigma


def resi_variance(model: FittedModel, L: ContrastMatrix, mode: str | None = None,
                  signed: bool = False) -> float:
    """Asymptotic variance of sqrt(n) times the scaled effect size estimate.

    Returns exactly 1.0 (the null limit) when the unsigned estimate sits at
    the boundary and its gradient is undefined.
    """
    if mode is None:
        mode = model.cov_mode
    try:
        bundle = derivative_bundle(model, L, mode=mode, signed=signed)
    except BoundaryGradientError:
        return 1.0
    total = bundle.total()
    sigma_theta = _engine_sigma_theta(model, mode)
    return float(total @ sigma_theta @ total)


def default_variant(kind: str, signed: bool) -> str:
    """Family-default estimator variant (F/t linear, chi-square/Z logistic)."""
    if kind == LINEAR:
        return SIGNED_T if signed else UNSIGNED_F
    return SIGNED_Z if signed else UNSIGNED_CHISQ


def resi_estimate(model: FittedModel, L: ContrastMatrix, variant: str | None = None,
                  signed: bool = False, beta0=None) -> ResiEstimate:
    """Full pipeline: Wald statistics, point estimate, delta-method scale.

    The variance engine is defined at the null reference beta0 = 0; a
    nonzero beta0 affects the point estimate only.
    """
    if variant is None:
        variant = default_variant(model.family.kind, signed)
    signed = variant in (SIGNED_Z, SIGNED_T)
    cov = covariance(model)
    stats = wald_statistics(model, cov, L, beta0=beta0)
    sigma_s = math.sqrt(resi_variance(model, L, signed=signed))
    builder = {
        UNSIGNED_CHISQ: resi_unsigned,
        SIGNED_Z: resi_signed,
        SCALED: resi_scaled,
        UNSIGNED_F: resi_f,
        SIGNED_T: resi_t,
    }[variant]
    return builder(stats, sigma_s)
