"""Peaks over threshold: excesses, GPD maximum likelihood and the plug-in probability."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from evtss import optim
from evtss.dataset import Series
from evtss.dist import EPS_GUMBEL, GpdParams, log1p_over
from evtss.estimate import ProbEstimate
from evtss.fit_uni import SampleSizeError, _dlogt_dxi, fingerprint

MIN_EXCEED = 10
XI_MIN = -1.0


def _values(series):
    return np.asarray(series.values if isinstance(series, Series) else series, dtype=float)


def excesses(series, threshold: float) -> Series:
    """Excesses ``x - u`` of the values strictly above ``u``."""
    x = _values(series)
    y = x[x > threshold] - threshold
    if y.size < MIN_EXCEED:
        warnings.warn(f"only {y.size} exceedances above {threshold}", RuntimeWarning, stacklevel=2)
    return Series(y, unit=getattr(series, "unit", ""))


@dataclass(frozen=True)
class PotFit:
    params: GpdParams
    se: np.ndarray  # (sigma, xi)
    vcov: np.ndarray
    n_exceed: int
    n: int
    loglik: float
    converged: bool
    message: str = ""
    grad_norm: float = float("nan")
    fingerprint: str = ""

    @property
    def threshold(self) -> float:
        return self.params.threshold

    @property
    def sigma(self) -> float:
        return self.params.sigma

    @property
    def xi(self) -> float:
        return self.params.xi

    def to_dict(self) -> dict:
        return {
            "family": "gpd",
            "param_names": ["sigma", "xi"],
            "params": {"threshold": self.threshold, "sigma": self.sigma, "xi": self.xi,
                       "exceedance_rate": self.params.exceedance_rate},
            "se": {"sigma": float(self.se[0]), "xi": float(self.se[1])},
            "vcov": self.vcov.tolist(),
            "loglik": self.loglik,
            "n": self.n,
            "n_exceed": self.n_exceed,
            "converged": self.converged,
            "message": self.message,
        }


def gpd_nll(y, sigma, xi, grad=False):
    """Negative log-likelihood of excesses; gradient wrt (log sigma, xi)."""
    if not (sigma > 0) or xi <= XI_MIN:
        return (np.inf, None) if grad else np.inf
    z = y / sigma
    w = 1.0 + xi * z
    if np.any(w <= 0):
        return (np.inf, None) if grad else np.inf
    L = np.log1p(xi * z)
    A = log1p_over(xi, z)
    val = y.size * math.log(sigma) + float(np.sum(L + A))
    if not grad:
        return val
    d_ls = y.size - float(np.sum(z * (1.0 + xi) / w))
    d_xi = float(np.sum(z / w + _dlogt_dxi(xi, z)))
    return val, np.array([d_ls, d_xi])


def gpd_loglik(theta, y) -> float:
    """Log-likelihood at natural parameters (sigma, xi)."""
    return -gpd_nll(np.asarray(y, dtype=float), theta[0], theta[1])


def _moment_start(y):
    m = float(np.mean(y))
    v = float(np.var(y))
    if v <= 0:
        return max(m, 1e-3), 0.0
    r = m * m / v
    xi = float(np.clip(0.5 * (1 - r), -0.9, 0.9))
    sigma = max(m * (1 - xi), 1e-6)
    if xi < 0 and np.max(y) >= -sigma / xi:
        xi = 0.0
        sigma = m
    return sigma, xi


def fit_gpd(series, threshold: float, seed: int = 0, n_starts: int = 5) -> PotFit:
    x = _values(series)
    y = x[x > threshold] - threshold
    if y.size < MIN_EXCEED:
        raise SampleSizeError(f"need at least {MIN_EXCEED} exceedances, got {y.size}")
    sig0, xi0 = _moment_start(y)

    def nll(par):
        return gpd_nll(y, math.exp(par[0]) if par[0] < 700 else np.inf, par[1])

    def grad(par):
        _, g = gpd_nll(y, math.exp(par[0]), par[1], grad=True)
        return g if g is not None else np.full(2, np.nan)

    res = optim.minimize(nll, np.array([math.log(sig0), xi0]), grad=grad, n_starts=n_starts, seed=seed)
    sigma, xi = math.exp(res.x[0]), float(res.x[1])
    vcov_opt, note = optim.covariance_from_hessian(optim.fd_hessian(nll, res.x, grad=grad))
    if note:
        warnings.warn(note, RuntimeWarning, stacklevel=2)
    J = np.diag([sigma, 1.0])
    vcov = J @ vcov_opt @ J.T
    se = np.sqrt(np.clip(np.diag(vcov), 0.0, None))
    converged = res.converged and xi > XI_MIN + 1e-3 and bool(np.all(np.isfinite(se)))
    params = GpdParams(
        threshold=float(threshold), sigma=sigma, xi=xi,
        exceedance_rate=y.size / x.size, se={"sigma": float(se[0]), "xi": float(se[1])},
    )
    return PotFit(params, se, vcov, int(y.size), int(x.size), -float(res.fun), bool(converged),
                  res.message, res.grad_norm, fingerprint(x))


def pot_survival(sigma, xi, threshold, x):
    """P(X > x | X > u) under the GPD; 0 beyond a finite endpoint."""
    y = np.asarray(x, dtype=float) - threshold
    z = y / sigma
    if abs(xi) < EPS_GUMBEL:
        return np.exp(-z)
    w = 1.0 + xi * z
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.exp(-np.log(np.where(w > 0, w, 1.0)) / xi)
    return np.where(w > 0, out, 0.0)


def pot_collision_probability(fit: PotFit, x_eval: float = 0.0) -> ProbEstimate:
    """Plug-in probability of reaching ``x_eval`` given an exceedance.

    ``p`` is conditional on exceeding the threshold; the unconditional value
    (times the exceedance rate) is reported in ``extra``.
    """
    if x_eval < fit.threshold:
        raise ValueError("evaluation point lies below the threshold")
    flags = []
    p = float(pot_survival(fit.sigma, fit.xi, fit.threshold, x_eval))
    if fit.xi < -EPS_GUMBEL and x_eval - fit.threshold >= fit.params.upper_excess:
        flags.append("beyond_endpoint")
        p = 0.0
    p = min(max(p, 0.0), 1.0)
    return ProbEstimate(
        p=p, ci=None, method="pot_plugin", flags=tuple(flags),
        extra={"conditional": p, "unconditional": p * fit.params.exceedance_rate,
               "exceedance_rate": fit.params.exceedance_rate, "x_eval": float(x_eval)},
    )
