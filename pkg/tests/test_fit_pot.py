import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from evtss import GpdParams, PotFit, Series, fit_gpd
from evtss.dist import gpd_sample
from evtss.fit_pot import excesses, gpd_loglik, pot_collision_probability
from evtss.fit_uni import SampleSizeError
from evtss.optim import fd_gradient, scaled_grad_norm


def _fit(sigma, xi, threshold=-1.5):
    p = GpdParams(threshold, sigma, xi, exceedance_rate=0.25)
    return PotFit(p, np.zeros(2), np.zeros((2, 2)), 100, 400, 0.0, True)


def test_excesses_examples():
    with pytest.warns(RuntimeWarning):
        assert excesses(Series(np.array([-1.2, -0.3, -0.1])), -0.5).values == pytest.approx([0.2, 0.4])
    with pytest.warns(RuntimeWarning):
        assert len(excesses(Series(np.array([1.0, 2.0])), 5.0)) == 0


def test_recovery_10k():
    y = gpd_sample(GpdParams(0.0, 0.3, -0.2), 10_000, seed=4).values
    fit = fit_gpd(y - 1.5, -1.5)
    assert fit.converged
    assert abs(fit.sigma - 0.3) <= 3 * fit.se[0]
    assert abs(fit.xi + 0.2) <= 3 * fit.se[1]
    g = fd_gradient(lambda t: gpd_loglik(t, y), np.array([fit.sigma, fit.xi]), rel=1e-7)
    assert scaled_grad_norm(g, np.array([fit.sigma, fit.xi])) < 1e-4


def test_matches_scipy_mle():
    y = gpd_sample(GpdParams(0.0, 0.5, 0.1), 2000, seed=9).values
    fit = fit_gpd(y, 0.0)
    c, _, scale = stats.genpareto.fit(y, floc=0.0)
    assert fit.loglik >= gpd_loglik([scale, c], y) - 1e-6
    assert fit.xi == pytest.approx(c, abs=5e-3)


def test_too_few_exceedances():
    with pytest.raises(SampleSizeError):
        fit_gpd(np.arange(20.0), 15.0)


def test_probability_examples():
    assert pot_collision_probability(_fit(0.3, 0.0), -0.05).p == pytest.approx(math.exp(-1.45 / 0.3), rel=1e-12)
    assert pot_collision_probability(_fit(0.3, 0.0), -0.05).p == pytest.approx(0.00793, abs=5e-5)
    assert pot_collision_probability(_fit(0.3, -0.2), -0.05).p == pytest.approx((1 - 0.2 * 1.45 / 0.3) ** 5)
    assert pot_collision_probability(_fit(0.3, -0.2), -1.5).p == 1.0


def test_probability_beyond_endpoint():
    est = pot_collision_probability(_fit(0.3, -0.5), 0.0)  # endpoint at -0.9
    assert est.p == 0.0 and "beyond_endpoint" in est.flags


def test_unconditional_scaling():
    est = pot_collision_probability(_fit(0.3, 0.1), 0.0)
    assert est.extra["unconditional"] == pytest.approx(0.25 * est.p)


@given(st.floats(0.05, 2), st.floats(-0.8, 0.8), st.lists(st.floats(-1.5, 3), min_size=2, max_size=10))
def test_probability_non_increasing(sigma, xi, xs):
    xs = sorted(xs)
    p = [pot_collision_probability(_fit(sigma, xi), x).p for x in xs]
    assert all(b <= a + 1e-15 for a, b in zip(p, p[1:]))


def test_threshold_stability():
    # exactly GPD above -1.5: shape estimates at higher thresholds agree within noise
    y = gpd_sample(GpdParams(0.0, 0.35, -0.2), 20_000, seed=6).values - 1.5
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        fits = [fit_gpd(y, u) for u in (-1.5, -1.3, -1.1, -0.9)]
    for f in fits:
        assert abs(f.xi + 0.2) <= 3 * f.se[1]
