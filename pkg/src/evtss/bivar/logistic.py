"""Bivariate logistic extreme-value model: Pickands function, sampler, full ML fit."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats

from evtss import optim
from evtss.dataset import Series
from evtss.dist import GevParams, log1p_over
from evtss.fit_uni import XI_MIN, NonStationarySpec, _as_design, _validate, fit_gev

R_BOUNDARY_TOL = 1e-4


def _check_r(r):
    if not 0 < r <= 1:
        raise ValueError(f"dependence parameter r must lie in (0, 1], got {r}")


def pickands_logistic(t, r):
    """A(t) = (t^(1/r) + (1-t)^(1/r))^r."""
    _check_r(r)
    t = np.asarray(t, dtype=float)
    if np.any((t < 0) | (t > 1)):
        raise ValueError("t must lie in [0, 1]")
    with np.errstate(divide="ignore"):
        a = np.logaddexp(np.log(t) / r, np.log1p(-t) / r)
    out = np.exp(r * a)
    return out.item() if out.ndim == 0 else out


def tail_dependence(r: float) -> float:
    """Upper tail dependence 2 - 2^r of the logistic model."""
    _check_r(r)
    return 2.0 - 2.0**r


def logistic_copula(u, v, r):
    """Extreme-value copula with logistic dependence; r = 1 is independence."""
    _check_r(r)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    with np.errstate(divide="ignore"):
        a = np.log(-np.log(u)) / r
        b = np.log(-np.log(v)) / r
    out = np.exp(-np.exp(r * np.logaddexp(a, b)))
    out = np.where((u <= 0) | (v <= 0), 0.0, out)
    out = np.where(u >= 1, v, np.where(v >= 1, u, out))
    return out.item() if out.ndim == 0 else out


def log_positive_stable(r, size, rng):
    """log S for positive stable S with Laplace transform exp(-s^r) (Kanter).

    Working with logs keeps small r from underflowing S to zero.
    """
    U = rng.uniform(0.0, np.pi, size=size)
    E = rng.exponential(size=size)
    if r == 1.0:
        return np.zeros(size)
    return (np.log(np.sin(r * U)) - np.log(np.sin(U)) / r
            + (1.0 - r) / r * (np.log(np.sin((1.0 - r) * U)) - np.log(E)))


def positive_stable(r, size, rng):
    return np.exp(log_positive_stable(r, size, rng))


def sample_logistic_t(n, r, rng):
    """Pairs (t1, t2), t = -log F, from the logistic model.

    Uses the mixture representation t_j = (E_j / S)^r with S positive
    stable and E_j unit exponentials.
    """
    _check_r(r)
    log_s = log_positive_stable(r, n, rng)
    E = rng.exponential(size=(2, n))
    return np.exp(r * (np.log(E) - log_s))


def sample_logistic_copula(n, r, seed):
    rng = np.random.default_rng(seed)
    t = sample_logistic_t(n, r, rng)
    return np.exp(-t[0]), np.exp(-t[1])


def gev_from_t(t, mu, sigma, xi):
    """GEV level whose -log CDF equals t."""
    y = -np.log(t)
    if xi == 0.0:
        return mu + sigma * y
    return mu + sigma * np.expm1(xi * y) / xi


def _margin_logt(x, mu, sigma, xi):
    """log t and log |dt/dx| for one GEV margin, or None if outside support."""
    z = (x - mu) / sigma
    if np.any(1.0 + xi * z <= 0):
        return None
    logt = -log1p_over(xi, z)
    return logt, (1.0 + xi) * logt - math.log(sigma)


def bev_logistic_logpdf(x, y, m1, m2, r):
    """Joint log density of the logistic model with GEV margins.

    ``m1``/``m2`` are (mu, sigma, xi) with mu scalar or per observation.
    Returns an array, or None outside the margins' support.
    """
    a = _margin_logt(x, *m1)
    b = _margin_logt(y, *m2)
    if a is None or b is None:
        return None
    lt1, jac1 = a
    lt2, jac2 = b
    logs = np.logaddexp(lt1 / r, lt2 / r)
    V = np.exp(r * logs)
    return (
        -V
        + (1.0 / r - 1.0) * (lt1 + lt2)
        + (r - 2.0) * logs
        + np.log(V + (1.0 - r) / r)
        + jac1
        + jac2
    )


@dataclass(frozen=True)
class BivLogisticFit:
    specs: tuple[NonStationarySpec, NonStationarySpec]
    theta: np.ndarray  # margin 1 (beta, sigma, [xi]), margin 2 (...), r
    se: np.ndarray
    vcov: np.ndarray
    loglik: float
    n: int
    converged: bool
    message: str = ""
    grad_norm: float = float("nan")
    warnings: tuple[str, ...] = ()
    labels: tuple[str, str] = ("ttc", "thw")

    def _slices(self):
        k1 = self.specs[0].n_params
        k2 = self.specs[1].n_params
        return slice(0, k1), slice(k1, k1 + k2)

    @property
    def r(self) -> float:
        return float(self.theta[-1])

    @property
    def r_se(self) -> float:
        return float(self.se[-1])

    @property
    def k(self) -> int:
        return len(self.theta)

    @property
    def aic(self) -> float:
        return 2 * self.k - 2 * self.loglik

    @property
    def tail_dependence(self) -> float:
        return tail_dependence(self.r)

    def margin_theta(self, j: int) -> np.ndarray:
        return self.theta[self._slices()[j]]

    def margin_params(self, j: int, covariates_row=None) -> GevParams:
        spec = self.specs[j]
        th = self.margin_theta(j)
        kc = len(spec.covariate_names)
        mu = th[0]
        if covariates_row is not None and kc:
            mu = mu + float(np.dot(np.asarray(covariates_row, dtype=float), th[1 : kc + 1]))
        xi = 0.0 if spec.fix_shape_to_zero else float(th[kc + 2])
        return GevParams(float(mu), float(th[kc + 1]), xi)

    def margin_location(self, j: int, covariates=None, n=None) -> np.ndarray:
        spec = self.specs[j]
        th = self.margin_theta(j)
        kc = len(spec.covariate_names)
        X = _as_design(covariates, n or self.n, kc)
        return th[0] + X @ th[1 : kc + 1]

    def param_names(self) -> list[str]:
        out = []
        for label, spec in zip(self.labels, self.specs):
            out += [f"{label}.{p}" for p in spec.param_names()]
        return out + ["r"]

    def to_dict(self) -> dict:
        names = self.param_names()
        return {
            "family": "bev_logistic",
            "margins": [s.to_dict() for s in self.specs],
            "labels": list(self.labels),
            "param_names": names,
            "params": dict(zip(names, map(float, self.theta))),
            "se": dict(zip(names, map(float, self.se))),
            "vcov": self.vcov.tolist(),
            "r": self.r,
            "tail_dependence": self.tail_dependence,
            "loglik": self.loglik,
            "aic": self.aic,
            "n": self.n,
            "converged": self.converged,
            "message": self.message,
            "warnings": list(self.warnings),
        }


def fit_bev_logistic(pairs, covariates=(None, None), specs=None, seed: int = 0, n_starts: int = 3,
                     labels=("ttc", "thw")) -> BivLogisticFit:
    """Joint ML of both GEV margins and the logistic dependence parameter.

    Margins must already be on the maxima scale (negated / normalized).
    Starts from separate univariate fits and ``r = 1 - tau``.
    """
    specs = tuple(specs or (NonStationarySpec(), NonStationarySpec()))
    xs = [np.asarray(p.values if isinstance(p, Series) else p, dtype=float) for p in pairs]
    if xs[0].size != xs[1].size:
        raise ValueError("component series differ in length")
    n = xs[0].size
    Xs, ms, ss = [], [], []
    for j in range(2):
        kc = len(specs[j].covariate_names)
        X = _as_design(covariates[j], n, kc)
        _validate(xs[j], X, specs[j])
        m = X.mean(axis=0) if kc else np.zeros(0)
        s = X.std(axis=0) if kc else np.ones(0)
        Xs.append((X - m) / s if kc else X)
        ms.append(m)
        ss.append(s)

    uni = [fit_gev(xs[j], Xs[j] if Xs[j].shape[1] else None, specs[j], seed=seed) for j in range(2)]
    tau = stats.kendalltau(xs[0], xs[1]).statistic
    r0 = float(np.clip(1.0 - tau, 0.3, 0.98)) if np.isfinite(tau) else 0.9

    def to_opt(fit):
        kc = len(fit.spec.covariate_names)
        th = fit.theta.copy()
        th[kc + 1] = math.log(th[kc + 1])
        return th

    k1 = specs[0].n_params
    start = np.concatenate([to_opt(uni[0]), to_opt(uni[1]), [r0]])

    def unpack_margin(par, j):
        spec = specs[j]
        kc = len(spec.covariate_names)
        b = par[: kc + 1]
        ls = par[kc + 1]
        sigma = math.exp(ls) if ls < 700 else np.inf
        xi = 0.0 if spec.fix_shape_to_zero else par[kc + 2]
        return b[0] + Xs[j] @ b[1:], sigma, xi

    def nll(par):
        r = par[-1]
        if not 0.0 < r <= 1.0:
            return np.inf
        m1 = unpack_margin(par[:k1], 0)
        m2 = unpack_margin(par[k1:-1], 1)
        if m1[2] <= XI_MIN or m2[2] <= XI_MIN:
            return np.inf
        lp = bev_logistic_logpdf(xs[0], xs[1], m1, m2, r)
        if lp is None:
            return np.inf
        val = -float(np.sum(lp))
        return val if np.isfinite(val) else np.inf

    res = optim.minimize(nll, start, n_starts=n_starts, seed=seed, jitter=0.02)
    notes = []
    par = res.x.copy()
    at_boundary = par[-1] > 1.0 - R_BOUNDARY_TOL
    if at_boundary:
        par[-1] = 1.0
        notes.append("r at the independence boundary 1")
        warnings.warn("logistic dependence r pinned at 1 (independence)", RuntimeWarning, stacklevel=2)
        free = np.arange(par.size - 1)
    else:
        free = np.arange(par.size)

    def nll_free(q):
        full = par.copy()
        full[free] = q
        return nll(full)

    H = optim.fd_hessian(nll_free, par[free])
    vcov_free, note = optim.covariance_from_hessian(H)
    if note:
        notes.append(note)
    vcov_opt = np.full((par.size, par.size), np.nan)
    vcov_opt[np.ix_(free, free)] = vcov_free
    if at_boundary:
        vcov_opt[-1, -1] = 0.0

    # back to original covariate units and sigma
    J = np.zeros((par.size, par.size))
    theta = par.copy()
    offset = 0
    for j in range(2):
        spec = specs[j]
        kc = len(spec.covariate_names)
        m, s = ms[j], ss[j]
        b = par[offset : offset + kc + 1]
        theta[offset] = b[0] - np.sum(b[1:] * m / s)
        theta[offset + 1 : offset + kc + 1] = b[1:] / s
        J[offset, offset] = 1.0
        for c in range(kc):
            J[offset, offset + c + 1] = -m[c] / s[c]
            J[offset + c + 1, offset + c + 1] = 1.0 / s[c]
        sigma = math.exp(par[offset + kc + 1])
        theta[offset + kc + 1] = sigma
        J[offset + kc + 1, offset + kc + 1] = sigma
        if not spec.fix_shape_to_zero:
            J[offset + kc + 2, offset + kc + 2] = 1.0
        offset += spec.n_params
    J[-1, -1] = 1.0
    vcov = J @ np.nan_to_num(vcov_opt) @ J.T
    if at_boundary:
        vcov[-1, :] = vcov[:, -1] = 0.0
    vcov = 0.5 * (vcov + vcov.T)
    se = np.sqrt(np.clip(np.diag(vcov), 0.0, None))
    if at_boundary:
        se[-1] = np.nan

    converged = bool((res.converged or at_boundary) and np.isfinite(res.fun))
    return BivLogisticFit(
        specs=specs, theta=theta, se=se, vcov=vcov, loglik=-float(nll(par)), n=n,
        converged=converged, message=res.message, grad_norm=res.grad_norm,
        warnings=tuple(notes), labels=tuple(labels),
    )


def bev_loglik(fit: BivLogisticFit, theta, pairs, covariates=(None, None)) -> float:
    """Log-likelihood at natural parameters, for derivative checks."""
    theta = np.asarray(theta, dtype=float)
    xs = [np.asarray(p.values if isinstance(p, Series) else p, dtype=float) for p in pairs]
    margins = []
    offset = 0
    for j, spec in enumerate(fit.specs):
        kc = len(spec.covariate_names)
        th = theta[offset : offset + spec.n_params]
        X = _as_design(covariates[j], xs[j].size, kc)
        xi = 0.0 if spec.fix_shape_to_zero else th[kc + 2]
        if not th[kc + 1] > 0:
            return -np.inf
        margins.append((th[0] + X @ th[1 : kc + 1], th[kc + 1], xi))
        offset += spec.n_params
    r = theta[-1]
    if not 0 < r <= 1:
        return -np.inf
    lp = bev_logistic_logpdf(xs[0], xs[1], margins[0], margins[1], r)
    return -np.inf if lp is None else float(np.sum(lp))
