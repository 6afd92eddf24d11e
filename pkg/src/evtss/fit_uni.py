"""Maximum-likelihood GEV/Gumbel fits with the location linear in covariates."""
from __future__ import annotations

import hashlib
import math
import warnings
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy import special, stats

from evtss import optim
from evtss.dataset import Series
from evtss.dist import GevParams, gumbel_quantile, log1p_over

MIN_N = 30
# the GEV likelihood is unbounded below this shape
XI_MIN = -1.0


class DegenerateDesignError(ValueError):
    pass


class SampleSizeError(ValueError):
    pass


class SupportError(ValueError):
    def __init__(self, indices):
        self.indices = list(indices)
        head = ", ".join(map(str, self.indices[:10]))
        more = "" if len(self.indices) <= 10 else f" (+{len(self.indices) - 10} more)"
        super().__init__(f"observations outside the fitted support at indices {head}{more}")


@dataclass(frozen=True)
class NonStationarySpec:
    covariate_names: tuple[str, ...] = ()
    fix_shape_to_zero: bool = False
    interactions: Mapping[str, tuple] = field(default_factory=dict)

    def __post_init__(self):
        names = tuple(self.covariate_names)
        object.__setattr__(self, "covariate_names", names)
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate covariate names in {names}")

    @property
    def n_params(self) -> int:
        return len(self.covariate_names) + 1 + 1 + (0 if self.fix_shape_to_zero else 1)

    def param_names(self) -> list[str]:
        names = ["mu0", *(f"mu[{c}]" for c in self.covariate_names), "sigma"]
        if not self.fix_shape_to_zero:
            names.append("xi")
        return names

    def to_dict(self) -> dict:
        return {
            "covariate_names": list(self.covariate_names),
            "fix_shape_to_zero": self.fix_shape_to_zero,
            "interactions": {k: [list(p) for p in v] for k, v in dict(self.interactions).items()},
        }


@dataclass(frozen=True)
class UniFit:
    spec: NonStationarySpec
    theta: np.ndarray  # mu coefficients, sigma, [xi]
    se: np.ndarray
    vcov: np.ndarray
    loglik: float
    n: int
    converged: bool
    message: str = ""
    fingerprint: str = ""
    grad_norm: float = float("nan")
    warnings: tuple[str, ...] = ()

    @property
    def family(self) -> str:
        return "gumbel" if self.spec.fix_shape_to_zero else "gev"

    @property
    def beta(self) -> np.ndarray:
        return self.theta[: len(self.spec.covariate_names) + 1]

    @property
    def sigma(self) -> float:
        return float(self.theta[len(self.spec.covariate_names) + 1])

    @property
    def xi(self) -> float:
        return 0.0 if self.spec.fix_shape_to_zero else float(self.theta[-1])

    @property
    def xi_se(self) -> float:
        return 0.0 if self.spec.fix_shape_to_zero else float(self.se[-1])

    @property
    def k(self) -> int:
        return len(self.theta)

    @property
    def aic(self) -> float:
        return 2 * self.k - 2 * self.loglik

    def location(self, covariates=None) -> np.ndarray:
        X = _as_design(covariates, self.n if covariates is None else None, len(self.spec.covariate_names))
        return self.beta[0] + X @ self.beta[1:]

    def params(self, covariates_row=None) -> GevParams:
        """GevParams at one covariate row (the intercept when stationary)."""
        mu = self.beta[0]
        if covariates_row is not None:
            mu = mu + float(np.dot(np.asarray(covariates_row, dtype=float), self.beta[1:]))
        names = self.spec.param_names()
        return GevParams(float(mu), self.sigma, self.xi, se=dict(zip(names, map(float, self.se))))

    def coefficients(self) -> dict:
        return {name: {"estimate": float(v), "se": float(s)} for name, v, s in zip(self.spec.param_names(), self.theta, self.se)}

    def prefers_gumbel(self) -> bool:
        """Free-shape fit whose shape is within two standard errors of zero."""
        return not self.spec.fix_shape_to_zero and abs(self.xi) < 2 * self.xi_se

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "spec": self.spec.to_dict(),
            "param_names": self.spec.param_names(),
            "params": {k: v["estimate"] for k, v in self.coefficients().items()},
            "se": {k: v["se"] for k, v in self.coefficients().items()},
            "vcov": self.vcov.tolist(),
            "loglik": self.loglik,
            "aic": self.aic,
            "n": self.n,
            "converged": self.converged,
            "message": self.message,
            "warnings": list(self.warnings),
        }


def _as_design(covariates, n, k):
    if covariates is None:
        if k:
            raise ValueError("covariates required for a non-stationary fit")
        return np.empty((n, 0))
    X = np.asarray(covariates, dtype=float)
    if X.ndim == 1:
        X = X[:, None] if k == 1 else X[None, :]
    if X.shape[1] != k:
        raise ValueError(f"expected {k} covariate columns, got {X.shape[1]}")
    return X


def fingerprint(values) -> str:
    return hashlib.sha1(np.ascontiguousarray(values, dtype=float).tobytes()).hexdigest()[:16]


def _dlogt_dxi(xi, z):
    """d/dxi of log1p(xi*z)/xi; series near xi*z = 0 avoids cancellation."""
    y = xi * z
    small = np.abs(y) < 1e-3
    safe_xi = np.where(xi == 0.0, 1.0, xi)
    with np.errstate(invalid="ignore", divide="ignore"):
        exact = z / (safe_xi * (1.0 + y)) - np.log1p(y) / safe_xi**2
    series = z * z * (-0.5 + y * (2.0 / 3.0) - y * y * 0.75 + y**3 * 0.8)
    return np.where(small, series, exact)


def gev_nll_mu(x, mu, sigma, xi, grad=False):
    """GEV negative log-likelihood for per-observation locations.

    With ``grad`` also returns (d/dmu_i array, d/dlog sigma, d/dxi).
    Returns inf (and no gradient) outside the valid region.
    """
    if not (sigma > 0) or xi <= XI_MIN:
        return (np.inf, None) if grad else np.inf
    z = (x - mu) / sigma
    w = 1.0 + xi * z
    if np.any(w <= 0):
        return (np.inf, None) if grad else np.inf
    L = np.log1p(xi * z)
    A = log1p_over(xi, z)
    t = np.exp(-A)
    val = x.size * math.log(sigma) + float(np.sum(L + A + t))
    if not grad:
        return val
    common = (t - (1.0 + xi)) / w
    d_mu = common / sigma
    d_logsigma = x.size + float(np.sum(z * common))
    d_xi = float(np.sum(z / w + _dlogt_dxi(xi, z) * (1.0 - t)))
    return val, (d_mu, d_logsigma, d_xi)


def gev_loglik(theta, x, covariates=None, fix_shape_to_zero=False) -> float:
    """Log-likelihood at natural parameters (mu coefficients, sigma, [xi])."""
    theta = np.asarray(theta, dtype=float)
    x = np.asarray(x, dtype=float)
    k = theta.size - (2 if fix_shape_to_zero else 3)
    X = _as_design(covariates, x.size, k)
    mu = theta[0] + X @ theta[1 : k + 1]
    sigma = theta[k + 1]
    xi = 0.0 if fix_shape_to_zero else theta[k + 2]
    return -gev_nll_mu(x, mu, sigma, xi)


def pwm_start(x) -> tuple[float, float, float]:
    """Probability-weighted-moment GEV estimates (mu, sigma, xi)."""
    x = np.sort(np.asarray(x, dtype=float))
    n = x.size
    i = np.arange(n)
    b0 = x.mean()
    b1 = np.sum(i / (n - 1) * x) / n
    b2 = np.sum(i * (i - 1) / ((n - 1) * (n - 2)) * x) / n
    denom = 3 * b2 - b0
    l2 = 2 * b1 - b0
    if l2 <= 0 or denom == 0:
        sd = max(float(np.std(x)), 1e-3)
        return float(b0 - 0.45 * sd), 0.78 * sd, 0.0
    c = l2 / denom - math.log(2) / math.log(3)
    kk = 7.8590 * c + 2.9554 * c * c
    if abs(kk) < 1e-6:
        sigma = l2 / math.log(2)
        return float(b0 - np.euler_gamma * sigma), float(sigma), 0.0
    kk = float(np.clip(kk, -0.9, 0.9))
    g = special.gamma(1 + kk)
    sigma = l2 * kk / (g * (1 - 2.0**-kk))
    mu = b0 + sigma * (g - 1) / kk
    return float(mu), float(sigma), float(-kk)


def _validate(x, X, spec):
    if x.size < MIN_N:
        raise SampleSizeError(f"need at least {MIN_N} observations, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise ValueError("series contains non-finite values")
    if X.shape[0] != x.size:
        raise ValueError(f"covariate rows ({X.shape[0]}) != series length ({x.size})")
    if not np.all(np.isfinite(X)):
        raise DegenerateDesignError("covariate matrix contains non-finite values")
    for j, name in enumerate(spec.covariate_names):
        if np.ptp(X[:, j]) == 0:
            raise DegenerateDesignError(f"covariate {name!r} is constant")


def fit_gev(series, covariates=None, spec: NonStationarySpec | None = None, seed: int = 0, n_starts: int = 5) -> UniFit:
    """Fit a GEV (or Gumbel) with location ``mu0 + covariates @ beta``.

    Internally the covariates are centred and scaled; coefficients and the
    covariance are mapped back to the original units. Non-convergence is
    reported on the result rather than raised.
    """
    if spec is None:
        ncol = 0 if covariates is None else np.atleast_2d(np.asarray(covariates, dtype=float).T).shape[0]
        spec = NonStationarySpec(tuple(f"x{j + 1}" for j in range(ncol)))
    x = np.asarray(series.values if isinstance(series, Series) else series, dtype=float)
    k = len(spec.covariate_names)
    X = _as_design(covariates, x.size, k)
    _validate(x, X, spec)

    m = X.mean(axis=0) if k else np.zeros(0)
    s = X.std(axis=0) if k else np.ones(0)
    Xs = (X - m) / s if k else X
    fix = spec.fix_shape_to_zero

    # start: OLS slopes, then PWM on the de-trended series
    if k:
        design = np.column_stack([np.ones(x.size), Xs])
        slopes = np.linalg.lstsq(design, x, rcond=None)[0][1:]
        resid = x - Xs @ slopes
    else:
        slopes = np.zeros(0)
        resid = x
    mu0, sig0, xi0 = pwm_start(resid)
    if fix:
        xi0 = 0.0
    elif np.any(1 + xi0 * (resid - mu0) / sig0 <= 0):
        xi0 = 0.0

    def unpack(par):
        b = par[: k + 1]
        sigma = math.exp(par[k + 1]) if par[k + 1] < 700 else np.inf
        xi = 0.0 if fix else par[k + 2]
        return b, sigma, xi

    def nll(par):
        b, sigma, xi = unpack(par)
        return gev_nll_mu(x, b[0] + Xs @ b[1:], sigma, xi)

    def grad(par):
        b, sigma, xi = unpack(par)
        val, g = gev_nll_mu(x, b[0] + Xs @ b[1:], sigma, xi, grad=True)
        if g is None:
            return np.full(par.size, np.nan)
        d_mu, d_ls, d_xi = g
        out = [d_mu.sum(), *(Xs.T @ d_mu), d_ls]
        if not fix:
            out.append(d_xi)
        return np.array(out)

    start = np.array([mu0, *slopes, math.log(sig0), *([] if fix else [xi0])])
    res = optim.minimize(nll, start, grad=grad, n_starts=n_starts, seed=seed)

    b, sigma, xi = unpack(res.x)
    notes = []
    H = optim.fd_hessian(nll, res.x, grad=grad)
    vcov_opt, note = optim.covariance_from_hessian(H)
    if note:
        notes.append(note)
        warnings.warn(note, RuntimeWarning, stacklevel=2)

    # map (std beta, log sigma, xi) -> (raw beta, sigma, xi)
    p = res.x.size
    J = np.zeros((p, p))
    J[0, 0] = 1.0
    for j in range(k):
        J[0, j + 1] = -m[j] / s[j]
        J[j + 1, j + 1] = 1.0 / s[j]
    J[k + 1, k + 1] = sigma
    if not fix:
        J[k + 2, k + 2] = 1.0
    theta = np.array([b[0] - np.sum(b[1:] * m / s), *(b[1:] / s), sigma, *([] if fix else [xi])])
    vcov = J @ vcov_opt @ J.T
    vcov = 0.5 * (vcov + vcov.T)
    se = np.sqrt(np.clip(np.diag(vcov), 0.0, None))

    converged = res.converged and np.isfinite(res.fun) and bool(np.all(np.isfinite(se)))
    if not fix and xi <= XI_MIN + 1e-3:
        converged = False
        notes.append("shape at the lower bound -1")
    return UniFit(
        spec=spec,
        theta=theta,
        se=se,
        vcov=vcov,
        loglik=-float(res.fun),
        n=int(x.size),
        converged=bool(converged),
        message=res.message,
        fingerprint=fingerprint(x),
        grad_norm=res.grad_norm,
        warnings=tuple(notes),
    )


@dataclass(frozen=True)
class LRTest:
    statistic: float
    df: int
    p_value: float
    warning: str | None = None

    def to_dict(self) -> dict:
        return {"statistic": self.statistic, "df": self.df, "p_value": self.p_value, "warning": self.warning}


def is_nested(restricted: NonStationarySpec, full: NonStationarySpec) -> bool:
    if not set(restricted.covariate_names) <= set(full.covariate_names):
        return False
    # a free-shape model is not nested in a Gumbel one
    return restricted.fix_shape_to_zero or not full.fix_shape_to_zero


def lr_test(restricted: UniFit, full: UniFit) -> LRTest:
    if not is_nested(restricted.spec, full.spec):
        raise ValueError("restricted model is not nested in the full model")
    if restricted.fingerprint and full.fingerprint and restricted.fingerprint != full.fingerprint:
        raise ValueError("fits were estimated on different series")
    return lr_from_statistic(2.0 * (full.loglik - restricted.loglik), full.k - restricted.k)


def lr_from_statistic(statistic: float, df: int) -> LRTest:
    if df == 0:
        return LRTest(float(statistic), 0, 1.0, None if abs(statistic) < 1e-8 else "df is zero")
    if statistic < 0:
        warnings.warn(f"negative LR statistic {statistic:.4g}; treated as optimizer noise", RuntimeWarning, stacklevel=2)
        return LRTest(float(statistic), int(df), 1.0, "negative statistic")
    return LRTest(float(statistic), int(df), float(stats.chi2.sf(statistic, df)))


def standardize_residuals(fit: UniFit, series, covariates=None) -> Series:
    """Transform to standard Gumbel scale: -log t(x_i) at each fitted location."""
    x = np.asarray(series.values if isinstance(series, Series) else series, dtype=float)
    X = _as_design(covariates, x.size, len(fit.spec.covariate_names))
    z = (x - (fit.beta[0] + X @ fit.beta[1:])) / fit.sigma
    bad = np.flatnonzero(1.0 + fit.xi * z <= 0)
    if bad.size:
        raise SupportError(bad)
    return Series(log1p_over(fit.xi, z), unit="")


def ks_statistic(sample, cdf) -> float:
    """Kolmogorov-Smirnov distance between the sample ECDF and ``cdf``."""
    x = np.sort(np.asarray(sample.values if isinstance(sample, Series) else sample, dtype=float))
    n = x.size
    if n == 0:
        raise ValueError("empty sample")
    F = np.asarray(cdf(x), dtype=float)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))


@dataclass(frozen=True)
class QQData:
    theoretical: np.ndarray
    empirical: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    @property
    def inside_fraction(self) -> float:
        inside = (self.empirical >= self.lower) & (self.empirical <= self.upper)
        return float(inside.mean())

    def rows(self):
        return zip(self.theoretical, self.empirical, self.lower, self.upper)


def qq_plot_data(fit: UniFit, series, covariates=None, n_sim: int = 1000, seed: int = 0, level: float = 0.95) -> QQData:
    """Residual QQ points against Gumbel(0, 1) with a pointwise simulated envelope."""
    z = np.sort(standardize_residuals(fit, series, covariates).values)
    n = z.size
    pp = np.arange(1, n + 1) / (n + 1)
    rng = np.random.default_rng(seed)
    sims = np.sort(gumbel_quantile(rng.uniform(size=(n_sim, n))), axis=1)
    a = (1 - level) / 2
    lower, upper = np.quantile(sims, [a, 1 - a], axis=0)
    return QQData(gumbel_quantile(pp), z, lower, upper)
