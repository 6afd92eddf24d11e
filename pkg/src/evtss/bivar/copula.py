"""Joe-Frank (BB8) copula on pseudo-observations, and Kendall's-process GoF.

Parametrisation: theta >= 1, 0 < delta <= 1, generator
phi(t) = -log[(1 - (1 - delta t)^theta) / (1 - (1 - delta)^theta)].
theta = 1 is the independence copula; delta = 1 is the Joe copula.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, stats

from evtss import optim

THETA_MAX = 50.0
DELTA_MIN = 1e-3
_CLIP = 1e-12


@dataclass(frozen=True)
class PseudoObservations:
    u: np.ndarray
    v: np.ndarray

    def __len__(self):
        return len(self.u)


def pseudo_observations(x, y) -> PseudoObservations:
    """Ranks scaled by n+1; ties get average ranks."""
    x = np.asarray(getattr(x, "values", x), dtype=float)
    y = np.asarray(getattr(y, "values", y), dtype=float)
    if x.size != y.size:
        raise ValueError("pairs differ in length")
    n = x.size
    return PseudoObservations(stats.rankdata(x) / (n + 1), stats.rankdata(y) / (n + 1))


def _check(theta, delta):
    if not theta >= 1 or not 0 < delta <= 1:
        raise ValueError(f"Joe-Frank needs theta >= 1 and 0 < delta <= 1, got ({theta}, {delta})")


def _eta(theta, delta):
    with np.errstate(divide="ignore"):
        return -np.expm1(theta * np.log1p(-np.asarray(delta, dtype=float)))


def _g(t, theta, delta):
    """1 - (1 - delta t)^theta."""
    return -np.expm1(theta * np.log1p(-delta * t))


def jf_generator(t, theta, delta):
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore"):
        return -np.log(_g(t, theta, delta) / _eta(theta, delta))


def jf_generator_d1(t, theta, delta):
    t = np.asarray(t, dtype=float)
    a = 1.0 - delta * t
    return -theta * delta * a ** (theta - 1.0) / _g(t, theta, delta)


def jf_generator_d2(t, theta, delta):
    t = np.asarray(t, dtype=float)
    a = 1.0 - delta * t
    g = _g(t, theta, delta)
    g1 = theta * delta * a ** (theta - 1.0)
    g2 = -theta * (theta - 1.0) * delta**2 * a ** (theta - 2.0)
    return (g1 * g1 - g2 * g) / (g * g)


def jf_cdf(u, v, theta, delta):
    if np.ndim(theta) == 0:
        _check(theta, delta)
    u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
    v = np.clip(np.asarray(v, dtype=float), 0.0, 1.0)
    # 1 - g(u) g(v) / eta rewritten as ((A - E) + B (1 - A)) / (1 - E), with
    # A, B, E the theta-powers of 1 - delta*u, 1 - delta*v, 1 - delta; this
    # avoids cancellation once the powers fall below machine epsilon
    with np.errstate(divide="ignore", invalid="ignore"):
        la = theta * np.log1p(-delta * u)
        lb = theta * np.log1p(-delta * v)
        le = theta * np.log1p(-np.asarray(delta, dtype=float))
        a_minus_e = np.exp(la) * -np.expm1(le - la)
        num = a_minus_e + np.exp(lb) * -np.expm1(la)
        log_q = np.log(num) - np.log1p(-np.exp(le))
        out = -np.expm1(log_q / theta) / delta
    out = np.where(u >= 1, v, np.where(v >= 1, u, out))
    out = np.where((u <= 0) | (v <= 0), 0.0, out)
    return out.item() if out.ndim == 0 else out


def jf_logpdf(u, v, theta, delta):
    """Log density via -phi''(C) phi'(u) phi'(v) / phi'(C)^3."""
    u = np.clip(np.asarray(u, dtype=float), _CLIP, 1 - _CLIP)
    v = np.clip(np.asarray(v, dtype=float), _CLIP, 1 - _CLIP)
    c = np.clip(jf_cdf(u, v, theta, delta), _CLIP, 1 - _CLIP)
    with np.errstate(divide="ignore", invalid="ignore"):
        return (
            np.log(jf_generator_d2(c, theta, delta))
            + np.log(-jf_generator_d1(u, theta, delta))
            + np.log(-jf_generator_d1(v, theta, delta))
            - 3.0 * np.log(-jf_generator_d1(c, theta, delta))
        )


def jf_hfunc(u, v, theta, delta):
    """Conditional CDF dC/du = phi'(u) / phi'(C)."""
    c = np.clip(jf_cdf(u, v, theta, delta), _CLIP, 1.0)
    return jf_generator_d1(u, theta, delta) / jf_generator_d1(c, theta, delta)


def jf_sample(n, theta, delta, seed):
    """Draw n pairs by conditional inversion (vectorised bisection).

    ``n`` may be a shape tuple, e.g. (replicates, n).
    """
    _check(theta, delta)
    rng = np.random.default_rng(seed)
    u = rng.uniform(_CLIP, 1 - _CLIP, size=n)
    w = rng.uniform(size=n)
    if theta == 1.0:
        return u, w
    lo = np.zeros_like(u)
    hi = np.ones_like(u)
    for _ in range(52):
        mid = 0.5 * (lo + hi)
        below = jf_hfunc(u, mid, theta, delta) < w
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return u, 0.5 * (lo + hi)


def jf_kendall_distribution(t, theta, delta):
    """K(t) = P(C(U, V) <= t) = t - phi(t)/phi'(t)."""
    t = np.asarray(t, dtype=float)
    tt = np.clip(t, 1e-300, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = tt - jf_generator(tt, theta, delta) / jf_generator_d1(tt, theta, delta)
    out = np.where(t <= 0, 0.0, np.where(t >= 1, 1.0, out))
    return np.clip(out, 0.0, 1.0)


def jf_kendall_tau(theta, delta) -> float:
    """tau = 1 + 4 * int_0^1 phi/phi' dt by adaptive quadrature."""
    _check(theta, delta)
    if theta == 1.0:
        return 0.0
    val, _ = integrate.quad(
        lambda t: jf_generator(t, theta, delta) / jf_generator_d1(t, theta, delta), 0.0, 1.0, limit=200
    )
    return 1.0 + 4.0 * val


@dataclass(frozen=True)
class CopulaFit:
    family: str
    theta: float
    delta: float
    loglik: float
    kendall_tau_implied: float
    se: tuple[float, float]
    n: int
    converged: bool
    flags: tuple[str, ...] = ()

    def cdf(self, u, v):
        return jf_cdf(u, v, self.theta, self.delta)

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "params": {"theta": self.theta, "delta": self.delta},
            "se": {"theta": self.se[0], "delta": self.se[1]},
            "loglik": self.loglik,
            "kendall_tau_implied": self.kendall_tau_implied,
            "n": self.n,
            "converged": self.converged,
            "flags": list(self.flags),
        }


def _jf_nll(par, u, v):
    theta, delta = par
    if not (1.0 <= theta <= THETA_MAX and DELTA_MIN <= delta <= 1.0):
        return np.inf
    with np.errstate(all="ignore"):
        val = -float(np.sum(jf_logpdf(u, v, theta, delta)))
    return val if np.isfinite(val) else np.inf


def jf_loglik(par, pobs: PseudoObservations) -> float:
    """Copula log-likelihood at natural (theta, delta); -inf off the parameter space."""
    return -_jf_nll(par, np.asarray(pobs.u), np.asarray(pobs.v))


def _to_natural(q):
    # theta = 1 + exp(a), delta = logistic(b); boundaries are never reached
    return 1.0 + np.exp(q[0]), 1.0 / (1.0 + np.exp(-q[1]))


def _to_opt(theta, delta):
    theta = min(max(theta, 1.0 + 1e-6), THETA_MAX)
    delta = min(max(delta, DELTA_MIN), 1.0 - 1e-9)
    return np.array([np.log(theta - 1.0), np.log(delta / (1.0 - delta))])


_GRID = [(t, d) for t in (1.05, 1.3, 1.7, 2.5, 4.0, 7.0) for d in (0.3, 0.6, 0.85, 0.99)]


def _fit_params(u, v, start=None, n_starts=1, polish=True):
    if start is None:
        start = min(_GRID, key=lambda p: _jf_nll(p, u, v))

    def f(q):
        if np.any(np.abs(q) > 30):
            return np.inf
        return _jf_nll(_to_natural(q), u, v)

    res = optim.minimize(f, _to_opt(*start), n_starts=n_starts, polish=polish, jitter=0.2)
    return np.array(_to_natural(res.x)), res


def fit_copula_joe_frank(pobs: PseudoObservations, start=None, seed: int = 0) -> CopulaFit:
    """Maximum likelihood over theta >= 1, 0 < delta <= 1."""
    u, v = np.asarray(pobs.u), np.asarray(pobs.v)
    if u.size < 50:
        raise ValueError(f"need at least 50 pairs, got {u.size}")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        (theta, delta), res = _fit_params(u, v, start, n_starts=3)
        theta, delta = float(theta), float(delta)
        flags = []
        if theta < 1.0 + 1e-3:
            flags.append("theta_at_independence_boundary")
        if delta > 1.0 - 1e-3:
            flags.append("delta_at_upper_bound")
        if delta < DELTA_MIN * 10 or theta > THETA_MAX - 1e-3:
            flags.append("parameter_at_search_bound")
        se = (np.nan, np.nan)
        if not flags:
            H = optim.fd_hessian(lambda p: _jf_nll(p, u, v), np.array([theta, delta]), rel=1e-4)
            vcov, note = optim.covariance_from_hessian(H)
            se = tuple(float(s) for s in np.sqrt(np.clip(np.diag(vcov), 0, None)))
            if note:
                flags.append("singular_information")
    return CopulaFit(
        family="joe_frank", theta=theta, delta=delta, loglik=-float(res.fun),
        kendall_tau_implied=jf_kendall_tau(theta, delta), se=se, n=int(u.size),
        converged=bool(res.converged and not flags), flags=tuple(flags),
    )


def kendall_pseudo(u, v) -> np.ndarray:
    """W_i = #{j : u_j < u_i, v_j < v_i} / (n - 1)."""
    u = np.asarray(u)
    v = np.asarray(v)
    less = (u[None, :] < u[:, None]) & (v[None, :] < v[:, None])
    return less.sum(axis=1) / (u.size - 1)


def kendall_process_stats(w, K) -> tuple[float, float]:
    """Cramer-von Mises and KS distances between the ECDF of ``w`` and ``K``.

    CvM is n * int (K_n - K)^2 dK, integrated exactly over the steps of K_n;
    KS is sqrt(n) * sup |K_n - K|.
    """
    n = w.size
    vals, counts = np.unique(w, return_counts=True)
    steps = np.cumsum(counts) / n  # K_n on [vals[i], vals[i+1])
    Kv = K(vals)
    knots = np.concatenate([[0.0], Kv, [1.0]])
    levels = np.concatenate([[0.0], steps])
    lo = knots[:-1] - levels
    hi = knots[1:] - levels
    cvm = n * float(np.sum((hi**3 - lo**3) / 3.0))
    before = np.concatenate([[0.0], steps[:-1]])
    ks = np.sqrt(n) * float(max(np.max(np.abs(steps - Kv)), np.max(np.abs(before - Kv))))
    return cvm, ks


@dataclass(frozen=True)
class GofResult:
    cvm: float
    ks: float
    cvm_p: float
    ks_p: float
    n_bootstrap: int

    def to_dict(self) -> dict:
        return {"cvm": self.cvm, "ks": self.ks, "cvm_p": self.cvm_p, "ks_p": self.ks_p,
                "n_bootstrap": self.n_bootstrap}


def _batch_nll(q, u, v):
    """Per-replicate negative log-likelihood; q has shape (B, 2), u and v (B, n)."""
    theta, delta = _to_natural(q.T)
    with np.errstate(all="ignore"):
        val = -np.sum(jf_logpdf(u, v, theta[:, None], delta[:, None]), axis=1)
    bad = ~np.isfinite(val) | np.any(np.abs(q) > 30, axis=1)
    return np.where(bad, np.inf, val)


def _batch_refit(u, v, start, iters=30, h=1e-4, gtol=1e-6):
    """Damped Newton run jointly over bootstrap replicates.

    Gradient and Hessian come from central differences in the unconstrained
    coordinates. A replicate whose Newton direction is not a descent
    direction takes a gradient step instead. Only unfinished replicates are
    evaluated on each pass.
    """
    B = u.shape[0]
    q = np.tile(_to_opt(*start), (B, 1))
    fq = _batch_nll(q, u, v)
    e = np.eye(2) * h
    active = np.flatnonzero(np.isfinite(fq))
    for _ in range(iters):
        if active.size == 0:
            break
        qa, fa, ua, va = q[active], fq[active], u[active], v[active]
        f = lambda x: _batch_nll(x, ua, va)  # noqa: E731
        fp = np.stack([f(qa + e[i]) for i in range(2)], axis=1)
        fm = np.stack([f(qa - e[i]) for i in range(2)], axis=1)
        g = (fp - fm) / (2 * h)
        h00 = (fp[:, 0] - 2 * fa + fm[:, 0]) / h**2
        h11 = (fp[:, 1] - 2 * fa + fm[:, 1]) / h**2
        h01 = (f(qa + e[0] + e[1]) - f(qa + e[0] - e[1]) - f(qa - e[0] + e[1]) + f(qa - e[0] - e[1])) / (4 * h * h)
        det = h00 * h11 - h01**2
        with np.errstate(all="ignore"):
            step = -np.stack([h11 * g[:, 0] - h01 * g[:, 1], h00 * g[:, 1] - h01 * g[:, 0]], axis=1) / det[:, None]
        newton_ok = (h00 > 0) & (det > 0) & np.all(np.isfinite(step), axis=1)
        step[~newton_ok] = -g[~newton_ok]
        size = np.max(np.abs(step), axis=1)
        step *= np.minimum(1.0, 2.0 / np.where(size > 0, size, 1.0))[:, None]
        t = np.ones(active.size)
        moved = np.zeros(active.size, dtype=bool)
        for _ in range(30):
            qn = qa + t[:, None] * step
            fn = f(qn)
            ok = (fn <= fa) & ~moved
            qa[ok], fa[ok] = qn[ok], fn[ok]
            moved |= ok
            if moved.all():
                break
            t = np.where(moved, t, 0.5 * t)
        q[active], fq[active] = qa, fa
        done = ~moved | (np.max(np.abs(g), axis=1) < gtol) | (t * size < 1e-9)
        active = active[~done]
    return _to_natural(q.T)


def copula_gof(fit: CopulaFit, pobs: PseudoObservations, n_bootstrap: int = 1000, seed: int = 0) -> GofResult:
    """Parametric-bootstrap GoF on Kendall's process.

    Each replicate is simulated from the fitted copula, re-ranked and
    re-fitted before computing its statistics. All replicates are drawn and
    re-fitted as one batch.
    """
    u, v = np.asarray(pobs.u), np.asarray(pobs.v)
    n = u.size

    def statistics(uu, vv, theta, delta):
        return kendall_process_stats(kendall_pseudo(uu, vv), lambda t: jf_kendall_distribution(t, theta, delta))

    cvm0, ks0 = statistics(u, v, fit.theta, fit.delta)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        xs, ys = jf_sample((n_bootstrap, n), fit.theta, fit.delta, seed)
        r = (n + 1.0)
        us = stats.rankdata(xs, axis=1) / r
        vs = stats.rankdata(ys, axis=1) / r
        thetas, deltas = _batch_refit(us, vs, (fit.theta, fit.delta))
        n_cvm = n_ks = 0
        for b in range(n_bootstrap):
            cvm, ks = statistics(us[b], vs[b], thetas[b], deltas[b])
            n_cvm += cvm >= cvm0
            n_ks += ks >= ks0
    return GofResult(float(cvm0), float(ks0), (1 + n_cvm) / (n_bootstrap + 1), (1 + n_ks) / (n_bootstrap + 1),
                     n_bootstrap)
