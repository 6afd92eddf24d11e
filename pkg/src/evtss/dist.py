"""GEV (with Gumbel limit) and GPD primitives.

All functions broadcast over numpy arrays. Models of minima are handled by
the caller negating the data; nothing here knows about minima.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from evtss.dataset import Series

EPS_GUMBEL = 1e-6


@dataclass(frozen=True)
class GevParams:
    mu: float
    sigma: float
    xi: float = 0.0
    se: dict | None = None

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")

    @property
    def is_gumbel(self) -> bool:
        return abs(self.xi) < EPS_GUMBEL

    @property
    def upper_endpoint(self) -> float:
        return self.mu - self.sigma / self.xi if self.xi < -EPS_GUMBEL else np.inf

    @property
    def lower_endpoint(self) -> float:
        return self.mu - self.sigma / self.xi if self.xi > EPS_GUMBEL else -np.inf


@dataclass(frozen=True)
class GpdParams:
    threshold: float
    sigma: float
    xi: float = 0.0
    exceedance_rate: float = 1.0
    se: dict | None = None

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")
        if not 0.0 <= self.exceedance_rate <= 1.0:
            raise ValueError(f"exceedance_rate must be in [0, 1], got {self.exceedance_rate}")

    @property
    def upper_excess(self) -> float:
        return -self.sigma / self.xi if self.xi < -EPS_GUMBEL else np.inf


def log1p_over(xi, z):
    """log1p(xi*z)/xi, continuous through xi = 0 where it equals z."""
    xi = np.asarray(xi, dtype=float)
    z = np.asarray(z, dtype=float)
    safe = np.where(xi == 0.0, 1.0, xi)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.log1p(safe * z) / safe
    return np.where(xi == 0.0, z, out)


def _gev_logt(mu, sigma, xi, x):
    """log t(x) where G = exp(-t); nan outside the support."""
    z = (np.asarray(x, dtype=float) - mu) / sigma
    if abs(xi) < EPS_GUMBEL:
        return -z, np.ones_like(z, dtype=bool)
    w = 1.0 + xi * z
    inside = w > 0
    with np.errstate(invalid="ignore", divide="ignore"):
        logt = -np.log(np.where(inside, w, 1.0)) / xi
    return logt, inside


def gev_cdf(p: GevParams, x):
    logt, inside = _gev_logt(p.mu, p.sigma, p.xi, x)
    with np.errstate(over="ignore"):
        val = np.exp(-np.exp(logt))
    # outside: below the lower endpoint (xi > 0) or above the upper one (xi < 0)
    outside = 0.0 if p.xi > 0 else 1.0
    out = np.where(inside, val, outside)
    return out.item() if out.ndim == 0 else out


def gev_pdf(p: GevParams, x):
    logt, inside = _gev_logt(p.mu, p.sigma, p.xi, x)
    xi = 0.0 if p.is_gumbel else p.xi
    with np.errstate(over="ignore", invalid="ignore"):
        val = np.exp((1.0 + xi) * logt - np.exp(logt)) / p.sigma
    out = np.where(inside, np.nan_to_num(val, nan=0.0, posinf=0.0), 0.0)
    return out.item() if out.ndim == 0 else out


def gev_quantile(p: GevParams, q):
    q = np.asarray(q, dtype=float)
    if np.any((q <= 0) | (q >= 1)):
        raise ValueError("quantile level must lie in (0, 1)")
    y = -np.log(-np.log(q))  # standard Gumbel quantile
    if p.is_gumbel:
        out = p.mu + p.sigma * y
    else:
        out = p.mu + p.sigma * np.expm1(p.xi * y) / p.xi
    return out.item() if out.ndim == 0 else out


def gev_sample(p: GevParams, n: int, seed: int) -> Series:
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    u = rng.uniform(size=n)
    # uniform() can return exactly 0
    u = np.clip(u, np.finfo(float).tiny, 1.0 - np.finfo(float).epsneg)
    return Series(np.asarray(gev_quantile(p, u), dtype=float), unit="")


def _check_excess(y):
    y = np.asarray(y, dtype=float)
    if np.any(y < 0):
        raise ValueError("GPD excesses must be >= 0")
    return y


def gpd_logsf(p: GpdParams, y):
    """log survival of the excess; -inf beyond a finite endpoint."""
    y = _check_excess(y)
    if abs(p.xi) < EPS_GUMBEL:
        return -y / p.sigma
    w = 1.0 + p.xi * y / p.sigma
    with np.errstate(divide="ignore", invalid="ignore"):
        out = -np.log(np.where(w > 0, w, 0.0)) / p.xi
    return np.where(w > 0, out, -np.inf)


def gpd_cdf(p: GpdParams, y):
    out = -np.expm1(gpd_logsf(p, y))
    return out.item() if np.ndim(out) == 0 else out


def gpd_pdf(p: GpdParams, y):
    logsf = gpd_logsf(p, y)
    xi = 0.0 if abs(p.xi) < EPS_GUMBEL else p.xi
    y = np.asarray(y, dtype=float)
    with np.errstate(invalid="ignore"):
        out = np.exp((1.0 + xi) * logsf) / p.sigma
    out = np.where(np.isfinite(logsf), out, 0.0)
    if xi < 0:
        out = np.where(y >= p.upper_excess, 0.0, out)
    return out.item() if out.ndim == 0 else out


def gpd_quantile(p: GpdParams, q):
    q = np.asarray(q, dtype=float)
    if np.any((q < 0) | (q >= 1)):
        raise ValueError("quantile level must lie in [0, 1)")
    e = -np.log1p(-q)  # standard exponential quantile
    if abs(p.xi) < EPS_GUMBEL:
        out = p.sigma * e
    else:
        out = p.sigma * np.expm1(p.xi * e) / p.xi
    return out.item() if out.ndim == 0 else out


def gpd_sample(p: GpdParams, n: int, seed: int) -> Series:
    """Excesses over the threshold (add ``p.threshold`` for levels)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    return Series(np.asarray(gpd_quantile(p, rng.uniform(size=n)), dtype=float), unit="")


def gumbel_cdf(x):
    return np.exp(-np.exp(-np.asarray(x, dtype=float)))


def gumbel_quantile(q):
    return -np.log(-np.log(np.asarray(q, dtype=float)))
