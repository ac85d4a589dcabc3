# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernels (Cholesky fits and moment tensors).

Same contracts as ``resikit._kernels_py``; selected by ``resikit._backend``
when built. The simulation and bootstrap loops spend nearly all their time
here, on small-matrix work where per-call numpy overhead dominates.
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs
from scipy.linalg.cython_lapack cimport dposv, dpotrs

cnp.import_array()

IS_COMPILED = True


cdef int _cholesky_solve(double[::1] gram, double[::1] rhs, int m) nogil:
    """In-place SPD solve via LAPACK dposv; gram holds the factor after."""
    cdef int n = m, nrhs = 1, lda = m, ldb = m, info = 0
    dposv("L", &n, &nrhs, &gram[0], &lda, &rhs[0], &ldb, &info)
    return info


def linear_solve(cnp.ndarray[double, ndim=2] X, cnp.ndarray[double, ndim=1] y):
    """Least-squares fit via Cholesky; returns (beta, resid, leverage)."""
    cdef int n = X.shape[0], m = X.shape[1]
    cdef cnp.ndarray[double, ndim=1] gram = np.zeros(m * m)
    cdef cnp.ndarray[double, ndim=1] beta = np.zeros(m)
    cdef cnp.ndarray[double, ndim=1] resid = np.empty(n)
    cdef cnp.ndarray[double, ndim=1] lev = np.empty(n)
    cdef double[:, ::1] Xv = X
    cdef double[::1] yv = y, g = gram, b = beta, r = resid, h = lev
    cdef int i, j, k, info, nrhs, lda, ldb, mm
    cdef double acc

    with nogil:
        for i in range(n):
            for j in range(m):
                acc = Xv[i, j]
                b[j] += acc * yv[i]
                for k in range(j, m):
                    g[j * m + k] += acc * Xv[i, k]
        for j in range(m):
            for k in range(j + 1, m):
                g[k * m + j] = g[j * m + k]
        info = _cholesky_solve(g, b, m)
    if info != 0:
        raise np.linalg.LinAlgError(f"normal equations not positive definite (info={info})")

    # Solve G Z = X' reusing the factor; X viewed column-major is exactly X'.
    cdef cnp.ndarray[double, ndim=2] Z = X.copy()
    cdef double[:, ::1] Zv = Z
    mm = m
    nrhs = n
    lda = m
    ldb = m
    info = 0
    with nogil:
        dpotrs("L", &mm, &nrhs, &g[0], &lda, &Zv[0, 0], &ldb, &info)
        for i in range(n):
            acc = 0.0
            for k in range(m):
                acc += Xv[i, k] * Zv[i, k]
            h[i] = acc
            acc = yv[i]
            for k in range(m):
                acc -= Xv[i, k] * b[k]
            r[i] = acc
    if info != 0:
        raise np.linalg.LinAlgError(f"leverage solve failed (info={info})")
    return beta, resid, lev


def logistic_solve(cnp.ndarray[double, ndim=2] X, cnp.ndarray[double, ndim=1] y,
                   double tol=1e-10, int max_iter=100, int max_halvings=30):
    """Damped Newton on the mean logistic score; returns (beta, mu, it, ok)."""
    cdef int n = X.shape[0], m = X.shape[1]
    cdef cnp.ndarray[double, ndim=1] beta = np.zeros(m)
    cdef cnp.ndarray[double, ndim=1] mu = np.full(n, 0.5)
    cdef cnp.ndarray[double, ndim=1] cand = np.empty(m)
    cdef cnp.ndarray[double, ndim=1] mu_cand = np.empty(n)
    cdef cnp.ndarray[double, ndim=1] score = np.empty(m)
    cdef cnp.ndarray[double, ndim=1] step = np.empty(m)
    cdef cnp.ndarray[double, ndim=1] hess = np.empty(m * m)
    cdef double[:, ::1] Xv = X
    cdef double[::1] yv = y, bv = beta, muv = mu, cv = cand, mcv = mu_cand
    cdef double[::1] sv = score, stv = step, hv = hess
    cdef int it = 0, i, j, k, info, halved
    cdef double snorm, snorm_cand, scale, acc, w

    _score(Xv, yv, muv, sv, n, m)
    snorm = _inf_norm(sv, m)
    if snorm <= tol:
        return beta, mu, 0, True
    while it < max_iter:
        it += 1
        with nogil:
            for j in range(m * m):
                hv[j] = 0.0
            for i in range(n):
                w = muv[i] * (1.0 - muv[i])
                for j in range(m):
                    acc = w * Xv[i, j]
                    for k in range(j, m):
                        hv[j * m + k] += acc * Xv[i, k]
            for j in range(m):
                for k in range(j + 1, m):
                    hv[k * m + j] = hv[j * m + k]
            for j in range(m * m):
                hv[j] /= n
            for j in range(m):
                stv[j] = sv[j]
            info = _cholesky_solve(hv, stv, m)
        if info != 0:
            raise np.linalg.LinAlgError(f"singular Newton step (info={info})")
        scale = 1.0
        for halved in range(max_halvings + 1):
            for j in range(m):
                cv[j] = bv[j] + scale * stv[j]
            _mu_at(Xv, cv, mcv, n, m)
            _score(Xv, yv, mcv, sv, n, m)
            snorm_cand = _inf_norm(sv, m)
            if snorm_cand < snorm or snorm_cand <= tol:
                break
            scale *= 0.5
        for j in range(m):
            bv[j] = cv[j]
        for i in range(n):
            muv[i] = mcv[i]
        snorm = snorm_cand
        if snorm <= tol:
            return beta, mu, it, True
    return beta, mu, it, False


cdef void _mu_at(double[:, ::1] X, double[::1] beta, double[::1] mu,
                 int n, int m) nogil:
    cdef int i, j
    cdef double t, e
    for i in range(n):
        t = 0.0
        for j in range(m):
            t += X[i, j] * beta[j]
        if t >= 0.0:
            mu[i] = 1.0 / (1.0 + exp(-t))
        else:
            e = exp(t)
            mu[i] = e / (1.0 + e)


cdef void _score(double[:, ::1] X, double[::1] y, double[::1] mu,
                 double[::1] score, int n, int m) nogil:
    cdef int i, j
    cdef double r
    for j in range(m):
        score[j] = 0.0
    for i in range(n):
        r = y[i] - mu[i]
        for j in range(m):
            score[j] += X[i, j] * r
    for j in range(m):
        score[j] /= n


cdef double _inf_norm(double[::1] v, int m) nogil:
    cdef double best = 0.0
    cdef int j
    for j in range(m):
        if fabs(v[j]) > best:
            best = fabs(v[j])
    return best


def weighted_gram(cnp.ndarray[double, ndim=2] X, cnp.ndarray[double, ndim=1] w):
    """(1/n) X' diag(w) X."""
    cdef int n = X.shape[0], m = X.shape[1]
    cdef cnp.ndarray[double, ndim=2] out = np.zeros((m, m))
    cdef double[:, ::1] Xv = X, ov = out
    cdef double[::1] wv = w
    cdef int i, j, k
    cdef double acc
    with nogil:
        for i in range(n):
            for j in range(m):
                acc = wv[i] * Xv[i, j]
                for k in range(j, m):
                    ov[j, k] += acc * Xv[i, k]
        for j in range(m):
            for k in range(j, m):
                ov[j, k] /= n
                ov[k, j] = ov[j, k]
    return out


def cubic_moment(cnp.ndarray[double, ndim=2] X, cnp.ndarray[double, ndim=1] w):
    """Third-moment tensor (m, m*m): row k = vec((1/n) sum_i w_i x_ik x_i x_i')."""
    cdef int n = X.shape[0], m = X.shape[1]
    cdef cnp.ndarray[double, ndim=2] out = np.zeros((m, m * m))
    cdef double[:, ::1] Xv = X, ov = out
    cdef double[::1] wv = w
    cdef int i, j, k, l
    cdef double ck, cj
    with nogil:
        for i in range(n):
            for k in range(m):
                ck = wv[i] * Xv[i, k]
                for j in range(m):
                    cj = ck * Xv[i, j]
                    for l in range(j, m):
                        ov[k, j * m + l] += cj * Xv[i, l]
        for k in range(m):
            for j in range(m):
                for l in range(j, m):
                    ov[k, j * m + l] /= n
                    ov[k, l * m + j] = ov[k, j * m + l]
    return out
