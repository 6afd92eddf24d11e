import warnings
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from evtss import GevParams, NonStationarySpec, fit_gev
from evtss.dist import gev_sample
from evtss.prob import (
    bm_collision_probability,
    bm_plugin_estimate,
    exceedance_at_zero,
    location_normal,
    prob_covariate_approach,
    prob_locationdist_approach,
)
from evtss.synth import generate_raw, calibrated_config


@pytest.fixture(autouse=True)
def _quiet():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        yield


@pytest.fixture(scope="module")
def stationary_fit():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        x = gev_sample(GevParams(-0.99, 0.383, -0.236), 463, seed=1).values
        return fit_gev(x)


@pytest.fixture(scope="module")
def covariate_fit():
    conf = calibrated_config(seed=3)
    d = generate_raw(conf)
    names = tuple(conf.ttc.coefs)
    X = d.X[:, [d.columns.index(c) for c in names]]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return fit_gev(d.neg_ttc, X, NonStationarySpec(names)), X


def test_examples():
    assert bm_collision_probability(GevParams(-1.456, 0.256, 0.0)) == pytest.approx(0.00337, abs=2e-5)
    assert bm_collision_probability(GevParams(-0.886, 0.431, -0.417)) == pytest.approx(0.00935, abs=1e-5)
    est = bm_plugin_estimate(GevParams(-1.0, 0.1, -0.5))
    assert est.p == 0.0 and "upper_endpoint_below_boundary" in est.flags


@given(st.floats(-3, 1), st.floats(0.05, 2), st.floats(-0.9, 0.9).filter(lambda v: abs(v) > 1e-4))
def test_matches_scipy(mu, sigma, xi):
    ref = stats.genextreme(c=-xi, loc=mu, scale=sigma).sf(0.0)
    assert exceedance_at_zero(mu, sigma, xi) == pytest.approx(ref, abs=1e-12)


@given(st.floats(-3, 0), st.floats(0.01, 1), st.floats(0.05, 2), st.floats(-0.9, 0.9))
def test_monotone_in_location(mu, step, sigma, xi):
    assert exceedance_at_zero(mu + step, sigma, xi) >= exceedance_at_zero(mu, sigma, xi) - 1e-15


def test_covariate_approach_stationary_reduces_to_plugin(stationary_fit):
    est = prob_covariate_approach(stationary_fit, mc_size=10_000, seed=0)
    assert est.p == bm_collision_probability(stationary_fit.params())
    assert 0.0 <= est.ci[0] <= est.p <= est.ci[1] <= 1.0


def test_determinism_and_thread_independence(covariate_fit):
    fit, X = covariate_fit
    for fn in (prob_covariate_approach, prob_locationdist_approach):
        a = fn(fit, X, mc_size=30_000, seed=4, threads=1)
        b = fn(fit, X, mc_size=30_000, seed=4, threads=3)
        assert a == b


def test_interval_scales_with_se(stationary_fit):
    full = prob_covariate_approach(stationary_fit, mc_size=40_000, seed=2)
    quarter = prob_covariate_approach(replace(stationary_fit, vcov=stationary_fit.vcov / 4), mc_size=40_000, seed=2)
    w, w4 = full.ci[1] - full.ci[0], quarter.ci[1] - quarter.ci[0]
    assert w4 / w == pytest.approx(0.5, rel=0.2)


def test_errors(stationary_fit):
    with pytest.raises(ValueError):
        prob_covariate_approach(stationary_fit, mc_size=100)
    bad = np.diag([1.0, -1.0, 1.0]) * 1e-3
    with pytest.raises(ValueError):
        prob_covariate_approach(replace(stationary_fit, vcov=bad), mc_size=10_000)
    with pytest.raises(ValueError):
        prob_locationdist_approach(replace(stationary_fit, converged=False), mc_size=10_000)


def test_locationdist_constant_covariates(covariate_fit):
    fit, X = covariate_fit
    const = np.tile(X.mean(axis=0), (50, 1))
    est = prob_locationdist_approach(fit, const, mc_size=10_000, seed=0)
    assert est.extra["location_normal"]["sd"] == 0.0
    mu = float(fit.beta[0] + const[0] @ fit.beta[1:])
    assert est.p == pytest.approx(bm_collision_probability(GevParams(mu, fit.sigma, fit.xi)), rel=1e-12)


def test_two_approaches_agree(covariate_fit):
    fit, X = covariate_fit
    a = prob_covariate_approach(fit, X, mc_size=20_000, seed=1)
    b = prob_locationdist_approach(fit, X, mc_size=20_000, seed=1)
    assert abs(a.p - b.p) / (0.5 * (a.p + b.p)) <= 0.10
    ln = b.extra["location_normal"]
    assert ln["sd"] > 0 and 0 <= ln["ks_stat"] < 0.2


def test_location_normal_summary():
    ln = location_normal(np.array([1.0, 2.0, 3.0]))
    assert ln.mean == 2.0 and ln.sd == pytest.approx(1.0)
