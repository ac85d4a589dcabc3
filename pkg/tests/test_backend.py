"""Compiled-vs-python kernel parity and backend selection."""
import os
import subprocess
import sys

import numpy as np
import pytest
from numpy.testing import assert_allclose

from resikit import _backend, _kernels_py

HAS_COMPILED = _backend.BACKEND == "compiled"

needs_compiled = pytest.mark.skipif(not HAS_COMPILED,
                                    reason="compiled kernels not built")


def _problem(seed, n=300, m=5):
    rng = np.random.default_rng(seed)
    X = np.column_stack([np.ones(n)] + [rng.normal(size=n) for _ in range(m - 1)])
    beta = rng.normal(size=m)
    y = X @ beta + rng.normal(size=n)
    prob = 1.0 / (1.0 + np.exp(-np.clip(X @ beta * 0.4, -6, 6)))
    y_bin = rng.binomial(1, prob).astype(float)
    w = rng.uniform(0.2, 3.0, n)
    return X, y, y_bin, w


@needs_compiled
@pytest.mark.parametrize("seed", range(5))
def test_linear_solve_parity(seed):
    X, y, _, _ = _problem(seed)
    b_c, r_c, h_c = _backend.kernels.linear_solve(X, y)
    b_p, r_p, h_p = _kernels_py.linear_solve(X, y)
    assert_allclose(b_c, b_p, rtol=1e-10, atol=1e-12)
    assert_allclose(r_c, r_p, rtol=1e-9, atol=1e-10)
    assert_allclose(h_c, h_p, rtol=1e-9, atol=1e-12)


@needs_compiled
@pytest.mark.parametrize("seed", range(5))
def test_logistic_solve_parity(seed):
    X, _, y_bin, _ = _problem(seed)
    b_c, mu_c, it_c, ok_c = _backend.kernels.logistic_solve(X, y_bin, 1e-10, 100, 30)
    b_p, mu_p, it_p, ok_p = _kernels_py.logistic_solve(X, y_bin, 1e-10, 100, 30)
    assert ok_c and ok_p and it_c == it_p
    assert_allclose(b_c, b_p, rtol=1e-9, atol=1e-11)
    assert_allclose(mu_c, mu_p, rtol=1e-9, atol=1e-11)


@needs_compiled
@pytest.mark.parametrize("seed", range(5))
def test_moment_kernels_parity(seed):
    X, _, _, w = _problem(seed)
    assert_allclose(_backend.kernels.weighted_gram(X, w),
                    _kernels_py.weighted_gram(X, w), rtol=1e-12, atol=1e-13)
    assert_allclose(_backend.kernels.cubic_moment(X, w),
                    _kernels_py.cubic_moment(X, w), rtol=1e-12, atol=1e-13)


def test_python_backend_forced_by_env():
    code = ("import resikit; import sys; "
            "sys.exit(0 if resikit.BACKEND == 'python' else 3)")
    env = dict(os.environ, RESIKIT_BACKEND="python")
    proc = subprocess.run([sys.executable, "-c", code], env=env)
    assert proc.returncode == 0


def test_invalid_backend_rejected():
    code = "import resikit"
    env = dict(os.environ, RESIKIT_BACKEND="fortran")
    proc = subprocess.run([sys.executable, "-c", code], env=env,
                          capture_output=True)
    assert proc.returncode != 0


@needs_compiled
def test_full_pipeline_matches_across_backends():
    code = """
import json, sys
import numpy as np
from resikit import ModelFamily, ContrastMatrix, TermSpec, fit, resi_estimate
from resikit.design import DesignMatrix

rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(77)))
n = 400
x = rng.binomial(1, 0.4, n).astype(float)
y = 0.9 * x + rng.normal(0, 1.2, n)
design = DesignMatrix(X=np.column_stack([np.ones(n), x]),
                      column_terms=("intercept", "x"),
                      terms=(TermSpec("x", "binary"),))
model = fit(ModelFamily("linear"), design, y)
est = resi_estimate(model, ContrastMatrix(L=np.array([[0.0, 1.0]])))
print(json.dumps([est.value, est.sigma_s]))
"""
    results = []
    for backend in ("compiled", "python"):
        env = dict(os.environ, RESIKIT_BACKEND=backend)
        proc = subprocess.run([sys.executable, "-c", code], env=env,
                              capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        results.append(proc.stdout.strip())
    import json as _json

    a = _json.loads(results[0])
    b = _json.loads(results[1])
    assert_allclose(a, b, rtol=1e-10)
