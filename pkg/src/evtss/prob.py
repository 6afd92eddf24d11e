"""Collision probabilities from fitted block-maxima models.

All models live on the negated scale, where the collision boundary is 0 and
the probability of interest is the mass at or beyond it, 1 - G(0).
Monte Carlo intervals come from drawing parameter vectors from the
asymptotic normal distribution of the estimator.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats

from evtss.dist import EPS_GUMBEL, GevParams
from evtss.estimate import ProbEstimate
from evtss.fit_uni import XI_MIN, UniFit, _as_design, ks_statistic

DEFAULT_MC_SIZE = 1_000_000
MIN_MC_SIZE = 10_000
CHUNK = 10_000
_GH_NODES = 40


def exceedance_at_zero(mu, sigma, xi):
    """Vectorised 1 - G(0) for GEV(mu, sigma, xi); broadcasts over arrays."""
    mu, sigma, xi = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (mu, sigma, xi)))
    w = 1.0 - xi * mu / sigma
    gumbel = np.abs(xi) < EPS_GUMBEL
    safe_xi = np.where(gumbel, 1.0, xi)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        logt = np.where(gumbel, mu / sigma, -np.log(np.where(w > 0, w, 1.0)) / safe_xi)
        p = -np.expm1(-np.exp(logt))
    # w <= 0: 0 is beyond the upper endpoint (xi < 0) or below the lower one (xi > 0)
    return np.where(gumbel | (w > 0), p, np.where(xi > 0, 1.0, 0.0))


def bm_collision_probability(params: GevParams) -> float:
    """1 - G(0); zero when a bounded fit ends below the boundary."""
    return float(exceedance_at_zero(params.mu, params.sigma, 0.0 if params.is_gumbel else params.xi))


def bm_plugin_estimate(params: GevParams) -> ProbEstimate:
    flags = ()
    if not params.is_gumbel and params.xi < 0 and params.upper_endpoint < 0:
        flags = ("upper_endpoint_below_boundary",)
    return ProbEstimate(p=bm_collision_probability(params), ci=None, method="bm_plugin", flags=flags,
                        extra={"upper_endpoint": params.upper_endpoint})


def _check_fit(fit: UniFit, mc_size: int):
    if not fit.converged:
        raise ValueError("fit did not converge")
    if mc_size < MIN_MC_SIZE:
        raise ValueError(f"mc_size must be at least {MIN_MC_SIZE}")
    V = np.asarray(fit.vcov, dtype=float)
    if not np.all(np.isfinite(V)):
        raise ValueError("covariance matrix has non-finite entries")
    eig = np.linalg.eigvalsh(0.5 * (V + V.T))
    if eig.min() < -1e-10 * max(eig.max(), 1e-300):
        raise ValueError("covariance matrix is not positive semi-definite")


def _split(theta, fit: UniFit):
    """Columns of a draw matrix -> (beta, sigma, xi)."""
    kb = len(fit.spec.covariate_names) + 1
    beta = theta[:, :kb]
    sigma = theta[:, kb]
    xi = np.zeros(len(theta)) if fit.spec.fix_shape_to_zero else theta[:, kb + 1]
    return beta, sigma, xi


def _draw_params(fit: UniFit, size: int, rng) -> tuple[np.ndarray, int]:
    """Normal draws around the estimate, redrawing those with sigma <= 0 or xi <= -1."""
    V = 0.5 * (fit.vcov + fit.vcov.T)
    out = np.empty((0, fit.k))
    rejected = 0
    while len(out) < size:
        need = size - len(out)
        d = rng.multivariate_normal(fit.theta, V, size=need, method="eigh")
        _, sigma, xi = _split(d, fit)
        ok = (sigma > 0) & (xi > XI_MIN)
        rejected += int(need - ok.sum())
        out = np.vstack([out, d[ok]])
        if rejected > 100 * size:
            raise ValueError("parameter draws almost never valid")
    return out, rejected


def _run_chunks(fn, mc_size: int, seed: int, threads: int):
    """Evaluate ``fn(n, rng)`` over fixed-size, independently seeded chunks.

    Chunk boundaries and seeds depend only on mc_size and seed, so the
    concatenated result is the same for any thread count.
    """
    sizes = [CHUNK] * (mc_size // CHUNK) + ([mc_size % CHUNK] if mc_size % CHUNK else [])
    seqs = np.random.SeedSequence(seed).spawn(len(sizes))
    jobs = [(n, np.random.default_rng(s)) for n, s in zip(sizes, seqs)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda a: fn(*a), jobs))
    else:
        parts = [fn(*a) for a in jobs]
    vals = np.concatenate([p[0] for p in parts])
    return vals, sum(p[1] for p in parts)


def _interval(p, draws, level):
    a = (1 - level) / 2
    lo, hi = (float(q) for q in np.quantile(draws, [a, 1 - a]))
    flags = []
    if lo > p or hi < p:
        lo, hi = min(lo, p), max(hi, p)
        flags.append("ci_extended_to_point")
    if lo < 0 or hi > 1:
        lo, hi = min(max(lo, 0.0), 1.0), min(max(hi, 0.0), 1.0)
        flags.append("ci_clamped")
    return (lo, hi), flags


def prob_covariate_approach(fit: UniFit, covariates=None, mc_size: int = DEFAULT_MC_SIZE, seed: int = 0,
                            level: float = 0.95, threads: int = 1) -> ProbEstimate:
    """Average of per-maneuver probabilities with each location taken from its covariates.

    The interval is the quantile range of the same average recomputed under
    ``mc_size`` parameter vectors drawn from Normal(theta_hat, vcov).
    """
    _check_fit(fit, mc_size)
    X = _as_design(covariates, fit.n if covariates is None else None, len(fit.spec.covariate_names))
    D = np.column_stack([np.ones(len(X)), X])
    mu = D @ fit.beta
    if np.ptp(mu) <= 1e-12 * max(1.0, abs(mu[0])):
        # identical locations: the average is the plug-in value itself
        mu = mu[:1]
    p_hat = float(np.mean(exceedance_at_zero(mu, fit.sigma, fit.xi)))

    def chunk(n, rng):
        th, rej = _draw_params(fit, n, rng)
        beta, sigma, xi = _split(th, fit)
        mu = beta @ D.T
        return exceedance_at_zero(mu, sigma[:, None], xi[:, None]).mean(axis=1), rej

    draws, rejected = _run_chunks(chunk, mc_size, seed, threads)
    ci, flags = _interval(p_hat, draws, level)
    if rejected:
        flags.append("invalid_draws_redrawn")
    return ProbEstimate(p=p_hat, ci=ci, method="bm_covariate_mc", level=level, mc_size=mc_size, seed=seed,
                        flags=tuple(flags), extra={"rejected_draws": rejected, "n_locations": len(D)})


@dataclass(frozen=True)
class LocationNormal:
    mean: float
    sd: float
    ks_stat: float

    def to_dict(self) -> dict:
        return {"mean": self.mean, "sd": self.sd, "ks_stat": self.ks_stat}


def location_normal(mu_i) -> LocationNormal:
    mu_i = np.asarray(mu_i, dtype=float)
    m = float(mu_i.mean())
    s = float(mu_i.std(ddof=1)) if mu_i.size > 1 else 0.0
    # identical design rows can differ in the last bit after the matrix product
    if s <= 1e-12 * max(1.0, abs(m)):
        return LocationNormal(m, 0.0, 0.0)
    return LocationNormal(m, s, ks_statistic(mu_i, stats.norm(m, s).cdf))


def _normal_mixture(m, s, sigma, xi):
    """E[1 - G(0)] with mu ~ Normal(m, s), by Gauss-Hermite quadrature."""
    x, w = np.polynomial.hermite_e.hermegauss(_GH_NODES)
    w = w / w.sum()
    mu = m[:, None] + s[:, None] * x[None, :]
    return exceedance_at_zero(mu, sigma[:, None], xi[:, None]) @ w


def prob_locationdist_approach(fit: UniFit, covariates=None, mc_size: int = DEFAULT_MC_SIZE, seed: int = 0,
                               level: float = 0.95, threads: int = 1) -> ProbEstimate:
    """Treat the fitted locations as a normal sample and integrate over it.

    The point estimate is the mean probability over ``mc_size`` simulated
    locations. For the interval, each parameter draw induces its own
    location normal (mean xbar'beta, variance beta' S beta over the sample
    covariance S), whose probability is integrated by quadrature.
    """
    _check_fit(fit, mc_size)
    X = _as_design(covariates, fit.n if covariates is None else None, len(fit.spec.covariate_names))
    D = np.column_stack([np.ones(len(X)), X])
    ln = location_normal(D @ fit.beta)

    def point_chunk(n, rng):
        return exceedance_at_zero(rng.normal(ln.mean, ln.sd, size=n), fit.sigma, fit.xi), 0

    if ln.sd > 0:
        vals, _ = _run_chunks(point_chunk, mc_size, seed, threads)
        p_hat = float(vals.mean())
    else:
        p_hat = float(exceedance_at_zero(ln.mean, fit.sigma, fit.xi))

    xbar = D.mean(axis=0)
    S = np.cov(D[:, 1:], rowvar=False, ddof=1).reshape(D.shape[1] - 1, D.shape[1] - 1) if len(D) > 1 else None

    def ci_chunk(n, rng):
        th, rej = _draw_params(fit, n, rng)
        beta, sigma, xi = _split(th, fit)
        m = beta @ xbar
        if S is None or S.size == 0:
            s = np.zeros(n)
        else:
            b = beta[:, 1:]
            s = np.sqrt(np.clip(np.einsum("ij,jk,ik->i", b, S, b), 0.0, None))
        return _normal_mixture(m, s, sigma, xi), rej

    ss = np.random.SeedSequence(seed).spawn(2)[1]
    draws, rejected = _run_chunks(ci_chunk, mc_size, int(ss.generate_state(1)[0]), threads)
    ci, flags = _interval(p_hat, draws, level)
    if rejected:
        flags.append("invalid_draws_redrawn")
    return ProbEstimate(p=p_hat, ci=ci, method="bm_locationdist_mc", level=level, mc_size=mc_size, seed=seed,
                        flags=tuple(flags), extra={"rejected_draws": rejected, "location_normal": ln.to_dict()})
