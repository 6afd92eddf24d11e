import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from evtss.dist import (
    GevParams,
    GpdParams,
    gev_cdf,
    gev_pdf,
    gev_quantile,
    gev_sample,
    gpd_cdf,
    gpd_pdf,
    gpd_quantile,
    gpd_sample,
)

mus = st.floats(-5, 5)
sigmas = st.floats(0.05, 5)
xis = st.floats(-0.9, 0.9)
# scipy loses the Gumbel limit for subnormal shapes, so its comparisons skip them
scipy_xis = xis.filter(lambda v: v == 0 or abs(v) > 1e-300)


def _scipy_gev(p):
    # scipy's shape c is the negative of xi
    return stats.genextreme(c=-p.xi, loc=p.mu, scale=p.sigma)


@pytest.mark.parametrize(
    "params,x,want",
    [((0, 1, 0), 0.0, math.exp(-1)), ((-0.886, 0.431, -0.417), 0.0, 0.99065), ((-1.456, 0.256, 0), 0.0, 0.99663)],
)
def test_gev_cdf_examples(params, x, want):
    # listed values carry five rounded digits, so allow a unit in the last place
    assert gev_cdf(GevParams(*params), x) == pytest.approx(want, abs=2e-5)
    mu, sigma, xi = params
    oracle = _scipy_gev(GevParams(mu, sigma, xi)).cdf(x)
    assert gev_cdf(GevParams(*params), x) == pytest.approx(oracle, abs=1e-12)


def test_gev_pdf_and_quantile_examples():
    p = GevParams(0, 1, 0)
    assert gev_pdf(p, 0.0) == pytest.approx(math.exp(-1))
    assert gev_quantile(p, math.exp(-1)) == pytest.approx(0.0, abs=1e-12)
    b = GevParams(-1.0, 0.5, -0.4)
    assert gev_quantile(b, 1 - 1e-12) == pytest.approx(b.upper_endpoint, abs=1e-3)
    with pytest.raises(ValueError):
        gev_quantile(p, 1.0)


def test_gev_out_of_support():
    b = GevParams(-1.0, 0.1, -0.5)  # upper endpoint -0.8
    assert gev_cdf(b, 0.0) == 1.0
    assert gev_pdf(b, 0.0) == 0.0
    f = GevParams(0.0, 1.0, 0.5)  # lower endpoint -2
    assert gev_cdf(f, -3.0) == 0.0


@given(mus, sigmas, scipy_xis, st.floats(-10, 10))
def test_gev_matches_scipy(mu, sigma, xi, z):
    p = GevParams(mu, sigma, xi)
    x = mu + sigma * z
    ref = _scipy_gev(p)
    assert gev_cdf(p, x) == pytest.approx(ref.cdf(x), abs=1e-10)
    assert gev_pdf(p, x) == pytest.approx(ref.pdf(x), rel=1e-7, abs=1e-12)


@given(mus, sigmas, xis, st.floats(1e-6, 1 - 1e-6))
def test_gev_quantile_inverts_cdf(mu, sigma, xi, q):
    p = GevParams(mu, sigma, xi)
    assert gev_cdf(p, gev_quantile(p, q)) == pytest.approx(q, abs=1e-9)


@given(mus, sigmas, xis)
def test_gev_cdf_monotone(mu, sigma, xi):
    p = GevParams(mu, sigma, xi)
    x = np.linspace(mu - 20 * sigma, mu + 20 * sigma, 400)
    F = gev_cdf(p, x)
    assert np.all(np.diff(F) >= 0)
    far = gev_cdf(p, np.array([mu - 1e6 * sigma, mu + 1e6 * sigma]))
    assert far[0] < 1e-6 and far[1] > 1 - 1e-5


@given(mus, sigmas, st.floats(-10, 10), st.sampled_from([1e-8, -1e-8]))
def test_gumbel_continuity(mu, sigma, z, eps):
    x = mu + sigma * z
    assert abs(gev_cdf(GevParams(mu, sigma, eps), x) - gev_cdf(GevParams(mu, sigma, 0.0), x)) < 1e-6


def test_gev_sample_deterministic_and_ks():
    p = GevParams(-0.99, 0.383, -0.236)
    a, b = gev_sample(p, 5000, seed=3), gev_sample(p, 5000, seed=3)
    assert np.array_equal(a.values, b.values)
    assert stats.kstest(a.values, _scipy_gev(p).cdf).pvalue > 0.01


def test_gev_invalid_sigma():
    with pytest.raises(ValueError):
        GevParams(0.0, 0.0)


@pytest.mark.parametrize("xi,sigma,y,want", [(0.0, 1.0, 1.0, 1 - math.exp(-1)), (-0.5, 1.0, 2.0, 1.0)])
def test_gpd_examples(xi, sigma, y, want):
    assert gpd_cdf(GpdParams(0.0, sigma, xi), y) == pytest.approx(want, abs=1e-12)


def test_gpd_negative_excess():
    with pytest.raises(ValueError):
        gpd_cdf(GpdParams(0.0, 1.0, 0.1), -0.1)


@given(sigmas, xis.filter(lambda v: abs(v) > 1e-4), st.floats(0, 20))
def test_gpd_matches_scipy(sigma, xi, y):
    # scipy loses the exponential limit for |xi| near machine zero
    p = GpdParams(0.0, sigma, xi)
    ref = stats.genpareto(c=xi, scale=sigma)
    assert gpd_cdf(p, y) == pytest.approx(ref.cdf(y), abs=1e-10)
    assert gpd_pdf(p, y) == pytest.approx(ref.pdf(y), rel=1e-7, abs=1e-12)


@given(sigmas, xis, st.floats(0, 1 - 1e-9))
def test_gpd_quantile_inverts(sigma, xi, q):
    p = GpdParams(0.0, sigma, xi)
    assert gpd_cdf(p, gpd_quantile(p, q)) == pytest.approx(q, abs=1e-9)


def test_gpd_sample_ks():
    p = GpdParams(0.0, 0.3, -0.2)
    y = gpd_sample(p, 5000, seed=1).values
    assert stats.kstest(y, stats.genpareto(c=-0.2, scale=0.3).cdf).pvalue > 0.01
    assert np.array_equal(y, gpd_sample(p, 5000, seed=1).values)
