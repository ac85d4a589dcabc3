"""Special-function accuracy against scipy as the high-precision reference."""
import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.testing import assert_allclose
from scipy import special as sps
from scipy import stats

from resikit.errors import ParameterError
from resikit.special import (
    chi2_cdf,
    chi2_sf,
    gammainc_lower,
    gammainc_upper,
    normal_cdf,
    normal_quantile,
    normal_sf,
)


def test_quantile_reference_values():
    assert abs(normal_quantile(0.975) - 1.959963984540054) < 1e-10
    assert abs(normal_quantile(0.95) - 1.6448536269514722) < 1e-10
    assert abs(normal_quantile(0.5)) < 1e-14


@pytest.mark.parametrize("p", [1e-12, 1e-6, 0.01, 0.02425, 0.3, 0.5, 0.7,
                               0.97575, 0.99, 1 - 1e-6, 1 - 1e-12])
def test_quantile_agrees_with_scipy(p):
    assert abs(normal_quantile(p) - stats.norm.ppf(p)) < 1e-10


def test_quantile_round_trip():
    for p in np.linspace(0.001, 0.999, 41):
        assert abs(normal_cdf(normal_quantile(p)) - p) < 1e-12


def test_cdf_sf_complement():
    for x in (-5.0, -1.3, 0.0, 0.7, 4.2):
        assert abs(normal_cdf(x) + normal_sf(x) - 1.0) < 1e-15
        assert abs(normal_cdf(x) - stats.norm.cdf(x)) < 1e-14


@pytest.mark.parametrize("df", [1, 2, 3, 5, 10, 50, 200])
def test_chi2_against_scipy(df):
    xs = np.linspace(0.01, 6.0 * df, 40)
    ours = [chi2_cdf(x, df) for x in xs]
    assert_allclose(ours, stats.chi2.cdf(xs, df), atol=1e-10)
    ours_sf = [chi2_sf(x, df) for x in xs]
    assert_allclose(ours_sf, stats.chi2.sf(xs, df), atol=1e-10)


def test_chi2_deep_tail():
    # Upper tail computed directly, so it keeps relative accuracy.
    assert_allclose(chi2_sf(100.0, 1), stats.chi2.sf(100.0, 1), rtol=1e-10)
    assert_allclose(chi2_sf(10.0, 1), 0.001565402258002549, rtol=1e-9)
    assert_allclose(chi2_sf(1.0, 1), 0.3173105078629141, rtol=1e-12)


@pytest.mark.parametrize("a", [0.3, 0.5, 1.0, 2.5, 17.0])
def test_incomplete_gamma(a):
    xs = np.linspace(0.01, 5 * a, 25)
    assert_allclose([gammainc_lower(a, x) for x in xs], sps.gammainc(a, xs),
                    atol=1e-12)
    assert_allclose([gammainc_upper(a, x) for x in xs], sps.gammaincc(a, xs),
                    atol=1e-12)


@given(st.floats(min_value=1e-6, max_value=1 - 1e-6))
def test_quantile_monotone_matches_cdf(p):
    x = normal_quantile(p)
    assert abs(normal_cdf(x) - p) < 1e-11


def test_parameter_errors():
    with pytest.raises(ParameterError):
        normal_quantile(0.0)
    with pytest.raises(ParameterError):
        normal_quantile(1.0)
    with pytest.raises(ParameterError):
        chi2_cdf(1.0, 0)
    with pytest.raises(ParameterError):
        gammainc_lower(-1.0, 1.0)
    with pytest.raises(ParameterError):
        gammainc_upper(1.0, -0.5)
