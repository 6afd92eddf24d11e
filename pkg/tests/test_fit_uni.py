import warnings

import numpy as np
import pytest
from scipy import stats

from evtss import GevParams, NonStationarySpec, fit_gev, lr_test
from evtss.dist import gev_cdf, gev_sample
from evtss.fit_uni import (
    DegenerateDesignError,
    SampleSizeError,
    SupportError,
    gev_loglik,
    ks_statistic,
    lr_from_statistic,
    qq_plot_data,
    standardize_residuals,
)
from evtss.optim import fd_gradient, scaled_grad_norm

TRUE = GevParams(-0.99, 0.383, -0.236)


@pytest.fixture(autouse=True)
def _quiet():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        yield


def _nonstationary(n, seed, coefs=(0.026, -0.023, -34.3, -0.097)):
    rng = np.random.default_rng(seed)
    X = np.column_stack([
        rng.uniform(15, 25, n),       # speed of the front vehicle, m/s
        rng.uniform(5, 20, n),        # accepted passing gap, s
        rng.uniform(0, 0.0045, n),    # curvature, 1/m
        rng.uniform(size=n) < 0.64,   # male
    ]).astype(float)
    mu = -0.983 - X.mean(axis=0) @ np.array(coefs) + X @ np.array(coefs)
    u = rng.uniform(size=n)
    x = mu + 0.383 * np.expm1(-0.236 * -np.log(-np.log(u))) / -0.236
    return x, X


def test_stationary_recovery_and_scipy_agreement():
    x = gev_sample(TRUE, 3000, seed=7).values
    fit = fit_gev(x, seed=0)
    assert fit.converged
    truth = np.array([TRUE.mu, TRUE.sigma, TRUE.xi])
    assert np.all(np.abs(fit.theta - truth) <= 3 * fit.se)
    c, loc, scale = stats.genextreme.fit(x, -TRUE.xi, loc=TRUE.mu, scale=TRUE.sigma)
    ref = gev_loglik([loc, scale, -c], x)
    assert fit.loglik >= ref - 1e-6


def test_gumbel_fit_and_lr():
    x = gev_sample(GevParams(-1.456, 0.256, 0.0), 800, seed=2).values
    g = fit_gev(x, spec=NonStationarySpec(fix_shape_to_zero=True))
    f = fit_gev(x)
    assert g.family == "gumbel" and g.k == 2
    t = lr_test(g, f)
    assert t.df == 1 and f.loglik >= g.loglik - 1e-9
    assert 0.0 <= t.p_value <= 1.0


def test_lr_examples():
    assert lr_from_statistic(5.189, 1).p_value == pytest.approx(0.0227, abs=1e-4)
    assert lr_from_statistic(17.508, 2).p_value == pytest.approx(1.58e-4, abs=1e-6)
    x = gev_sample(TRUE, 200, seed=1).values
    f = fit_gev(x)
    same = lr_test(f, f)
    assert same.statistic == 0 and same.p_value == 1.0


def test_lr_rejects_non_nested():
    x = gev_sample(TRUE, 200, seed=1).values
    X = np.random.default_rng(0).normal(size=(200, 1))
    a = fit_gev(x, X, NonStationarySpec(("a",)))
    b = fit_gev(x, X, NonStationarySpec(("b",)))
    with pytest.raises(ValueError):
        lr_test(a, b)


def test_negative_statistic_warns():
    with pytest.warns(RuntimeWarning):
        t = lr_from_statistic(-0.01, 1)
    assert t.p_value == 1.0 and t.warning


def test_errors():
    x = gev_sample(TRUE, 100, seed=0).values
    with pytest.raises(SampleSizeError):
        fit_gev(x[:20])
    with pytest.raises(DegenerateDesignError):
        fit_gev(x, np.ones((100, 1)), NonStationarySpec(("c",)))


def test_nonstationary_gradient_and_nesting():
    x, X = _nonstationary(463, seed=3)
    names = ("speedfront", "passinggap", "curvature", "gender")
    full = fit_gev(x, X, NonStationarySpec(names))
    sub = fit_gev(x, X[:, :2], NonStationarySpec(names[:2]))
    stat = fit_gev(x)
    assert full.converged and sub.converged
    assert full.loglik >= sub.loglik - 1e-8 >= stat.loglik - 2e-8
    for fit, cov in ((full, X), (sub, X[:, :2])):
        g = fd_gradient(lambda t: gev_loglik(t, x, cov), fit.theta, rel=1e-7)
        assert scaled_grad_norm(g, fit.theta) < 1e-4


@pytest.mark.slow
def test_covariate_signs_at_full_scale():
    names = ("speedfront", "passinggap", "curvature", "gender")
    want = np.sign([0.026, -0.023, -34.3, -0.097])
    hits = np.zeros(4)
    reps = 30
    for s in range(reps):
        x, X = _nonstationary(463, seed=100 + s)
        fit = fit_gev(x, X, NonStationarySpec(names), seed=s)
        hits += np.sign(fit.beta[1:]) == want
    assert np.all(hits / reps >= 0.9), hits


@pytest.mark.slow
def test_negative_shape_sign():
    neg = sum(fit_gev(gev_sample(TRUE, 500, seed=s).values, seed=s).xi < 0 for s in range(100))
    assert neg >= 95


@pytest.mark.slow
def test_lr_calibration_null_covariate():
    rng = np.random.default_rng(11)
    small = sig = 0
    for s in range(100):
        x = gev_sample(TRUE, 300, seed=500 + s).values
        z = rng.normal(size=(300, 1))
        a = fit_gev(x, seed=s)
        b = fit_gev(x, z, NonStationarySpec(("z",)), seed=s)
        small += (b.loglik - a.loglik) < 2
        sig += lr_test(a, b).p_value < 0.05
    assert small >= 90 and (100 - sig) >= 90


def test_standardized_residuals():
    x = np.array([-1.0, -0.9, -1.2])
    fit = fit_gev(gev_sample(TRUE, 400, seed=4).values)
    mu = fit.beta[0]
    assert standardize_residuals(fit, np.array([mu])).values[0] == pytest.approx(0.0, abs=1e-12)
    z = standardize_residuals(fit, x).values
    p = fit.params()
    np.testing.assert_allclose(np.exp(-np.exp(-z)), gev_cdf(p, x), atol=1e-12)
    with pytest.raises(SupportError):
        standardize_residuals(fit, np.array([p.upper_endpoint + 1.0]))


def test_ks_examples():
    u = stats.uniform.cdf
    assert ks_statistic(np.array([0.25, 0.5, 0.75]), u) == pytest.approx(0.25)
    n = 8
    assert ks_statistic((np.arange(1, n + 1) - 0.5) / n, u) == pytest.approx(0.5 / n)
    big = np.random.default_rng(0).uniform(size=20000)
    assert ks_statistic(big, u) < 0.015
    assert ks_statistic(big, u) == pytest.approx(stats.kstest(big, "uniform").statistic, abs=1e-12)


def test_qq_envelope_well_specified():
    inside = []
    for s in range(20):
        x = gev_sample(TRUE, 300, seed=900 + s).values
        fit = fit_gev(x, seed=s)
        inside.append(qq_plot_data(fit, x, n_sim=300, seed=s).inside_fraction)
    assert np.mean(np.array(inside) >= 0.95) >= 0.9


def test_qq_envelope_misspecified():
    # heavy upper tail fitted with a light-tailed Gumbel model
    x = gev_sample(GevParams(0.0, 1.0, 0.4), 400, seed=5).values
    fit = fit_gev(x, spec=NonStationarySpec(fix_shape_to_zero=True))
    qq = qq_plot_data(fit, x, n_sim=300, seed=0)
    top = slice(-20, None)
    assert np.mean(qq.empirical[top] > qq.upper[top]) > 0.5
