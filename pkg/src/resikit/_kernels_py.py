"""Pure-numpy implementations of the hot kernels.

`resikit._backend` exposes either these or the compiled Cython twins in
`resikit._kernels`; both follow the same contracts and agree to float
round-off. Everything here is called once per simulation/bootstrap
replicate, so the implementations favor BLAS-backed primitives.
"""
import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

IS_COMPILED = False


def linear_solve(X, y):
    """Least-squares fit via Cholesky of the normal equations.

    Returns ``(beta, resid, leverage)`` where ``leverage[i]`` is the hat
    matrix diagonal x_i' (X'X)^-1 x_i. Raises ``numpy.linalg.LinAlgError``
    when X'X is not positive definite (rank-deficient design).
    """
    G = X.T @ X
    try:
        factor = cho_factor(G, lower=True)
    except np.linalg.LinAlgError:
        raise
    except Exception as exc:  # scipy raises its own LinAlgError subclass
        raise np.linalg.LinAlgError(str(exc))
    beta = cho_solve(factor, X.T @ y)
    resid = y - X @ beta
    # h_i = ||L^-1 x_i||^2 with G = L L'
    V = solve_triangular(factor[0], X.T, lower=True)
    leverage = np.einsum("ji,ji->i", V, V)
    return beta, resid, leverage


def logistic_solve(X, y, tol=1e-10, max_iter=100, max_halvings=30):
    """Damped Newton iterations on the mean logistic score.

    Returns ``(beta, mu, n_iter, converged)``. Convergence requires the
    max-abs mean score to drop to ``tol``; each step is halved (up to
    ``max_halvings`` times) while it fails to reduce that norm.
    """
    n, m = X.shape
    beta = np.zeros(m)
    mu = np.full(n, 0.5)
    score = X.T @ (y - mu) / n
    snorm = np.max(np.abs(score))
    converged = snorm <= tol
    it = 0
    while not converged and it < max_iter:
        it += 1
        w = mu * (1.0 - mu)
        H = (X * w[:, None]).T @ X / n
        try:
            step = cho_solve(cho_factor(H, lower=True), score)
        except Exception as exc:
            raise np.linalg.LinAlgError(str(exc))
        scale = 1.0
        for _ in range(max_halvings + 1):
            cand = beta + scale * step
            mu_cand = _expit(X @ cand)
            score_cand = X.T @ (y - mu_cand) / n
            snorm_cand = np.max(np.abs(score_cand))
            if snorm_cand < snorm or snorm_cand <= tol:
                break
            scale *= 0.5
        beta, mu, score, snorm = cand, mu_cand, score_cand, snorm_cand
        converged = snorm <= tol
    return beta, mu, it, converged


def _expit(t):
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def weighted_gram(X, w):
    """(1/n) X' diag(w) X."""
    return (X * w[:, None]).T @ X / X.shape[0]


def cubic_moment(X, w):
    """Third-moment tensor (m, m*m): row k holds vec((1/n) sum_i w_i x_ik x_i x_i').

    The vec'd matrices are symmetric, so column- and row-major layouts agree.
    """
    n, m = X.shape
    out = np.empty((m, m * m))
    for k in range(m):
        out[k] = ((X * (w * X[:, k])[:, None]).T @ X / n).reshape(m * m)
    return out
