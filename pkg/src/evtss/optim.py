"""Multi-start Nelder-Mead with a damped Newton polish, and numerical derivatives.

Objectives are negative log-likelihoods that return ``inf`` outside the
valid parameter region. The simplex never needs gradients; the Newton
polish uses an analytic gradient when one is supplied and central
differences otherwise.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import optimize

GTOL = 1e-7


def _step(x, rel):
    return rel * np.maximum(np.abs(x), 1.0)


def fd_gradient(f, x, rel=1e-6):
    x = np.asarray(x, dtype=float)
    h = _step(x, rel)
    g = np.empty_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h[j]
        g[j] = (f(x + e) - f(x - e)) / (2 * h[j])
    return g


def fd_hessian(f, x, grad=None, rel=1e-5):
    """Central-difference Hessian.

    With ``grad`` the gradient is differenced (step ``rel``); otherwise
    function values are, with a step of ``10*rel`` to keep rounding error
    in check.
    """
    x = np.asarray(x, dtype=float)
    k = x.size
    H = np.empty((k, k))
    if grad is not None:
        h = _step(x, rel)
        for j in range(k):
            e = np.zeros(k)
            e[j] = h[j]
            H[:, j] = (grad(x + e) - grad(x - e)) / (2 * h[j])
    else:
        h = _step(x, 10 * rel)
        f0 = f(x)
        for i in range(k):
            ei = np.zeros(k)
            ei[i] = h[i]
            H[i, i] = (f(x + ei) - 2 * f0 + f(x - ei)) / h[i] ** 2
            for j in range(i):
                ej = np.zeros(k)
                ej[j] = h[j]
                H[i, j] = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)) / (4 * h[i] * h[j])
                H[j, i] = H[i, j]
    return 0.5 * (H + H.T)


def scaled_grad_norm(g, x):
    return float(np.max(np.abs(g) * np.maximum(np.abs(x), 1.0))) if np.size(g) else 0.0


@dataclass
class OptResult:
    x: np.ndarray
    fun: float
    converged: bool
    grad_norm: float
    message: str
    n_starts: int


def _finite(f):
    def wrapped(x):
        v = f(x)
        return v if np.isfinite(v) else np.inf
    return wrapped


def newton_polish(f, x, grad=None, max_iter=100, gtol=GTOL):
    """Damped Newton on ``f`` starting at ``x``.

    Steps are halved until the objective decreases and stays finite, so the
    iterate never leaves the valid region. Returns (x, fun, grad_norm).
    """
    gradf = grad if grad is not None else (lambda y: fd_gradient(f, y))
    fx = f(x)
    g = gradf(x)
    for _ in range(max_iter):
        if scaled_grad_norm(g, x) < gtol:
            break
        H = fd_hessian(f, x, grad=grad) if grad is not None else fd_hessian(f, x, grad=gradf, rel=1e-4)
        lam = 0.0
        scale = np.max(np.abs(np.diag(H))) if H.size else 1.0
        for _ in range(30):
            try:
                L = np.linalg.cholesky(H + lam * np.eye(len(x)))
                break
            except np.linalg.LinAlgError:
                lam = max(2 * lam, 1e-8 * max(scale, 1.0))
        else:
            break
        step = -np.linalg.solve(L.T, np.linalg.solve(L, g))
        t = 1.0
        improved = False
        gn = scaled_grad_norm(g, x)
        # near the optimum the decrease drops below float resolution of f
        slack = 1e-11 * max(1.0, abs(fx))
        for _ in range(40):
            xn = x + t * step
            fn = f(xn)
            if np.isfinite(fn):
                if fn < fx:
                    improved = True
                    break
                if fn <= fx + slack:
                    gnew = gradf(xn)
                    if scaled_grad_norm(gnew, xn) < gn:
                        improved = True
                        break
            t *= 0.5
        if not improved:
            break
        x, fx = xn, min(fn, fx)
        g = gradf(x)
    return x, fx, scaled_grad_norm(g, x)


def minimize(f, x0, grad=None, n_starts=5, jitter=0.1, seed=0, maxiter=None, polish=True, gtol=GTOL):
    """Minimize ``f`` from ``x0`` plus ``n_starts - 1`` jittered restarts.

    Jittered starts that land outside the valid region are retried with
    smaller jitter. The best simplex solution is polished by Newton.
    """
    f = _finite(f)
    x0 = np.asarray(x0, dtype=float)
    k = x0.size
    rng = np.random.default_rng(seed)
    maxiter = maxiter or 400 * max(k, 1)
    starts = [x0]
    while len(starts) < n_starts:
        scale = jitter
        for _ in range(20):
            cand = x0 + rng.normal(scale=scale, size=k) * np.maximum(np.abs(x0), 0.1)
            if np.isfinite(f(cand)):
                starts.append(cand)
                break
            scale *= 0.5
        else:
            starts.append(x0.copy())
    best = None
    for s in starts:
        if not np.isfinite(f(s)):
            continue
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            res = optimize.minimize(
                f, s, method="Nelder-Mead",
                options={"maxiter": maxiter, "maxfev": 2 * maxiter, "xatol": 1e-6, "fatol": 1e-8, "adaptive": k > 3},
            )
        if best is None or res.fun < best.fun:
            best = res
    if best is None:
        return OptResult(x0, np.inf, False, np.inf, "no valid starting point", len(starts))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        # a restart from the best vertex refreshes a collapsed simplex
        res = optimize.minimize(
            f, best.x, method="Nelder-Mead",
            options={"maxiter": maxiter, "maxfev": 2 * maxiter, "xatol": 1e-9, "fatol": 1e-11, "adaptive": k > 3},
        )
    x, fx = (res.x, res.fun) if res.fun <= best.fun else (best.x, best.fun)
    if polish:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            x, fx, gn = newton_polish(f, x, grad=grad, gtol=gtol)
    else:
        gn = scaled_grad_norm(grad(x) if grad else fd_gradient(f, x), x)
    converged = bool(np.isfinite(fx) and gn < max(gtol * 100, 1e-5))
    msg = "ok" if converged else f"gradient norm {gn:.3g} after polish"
    return OptResult(np.asarray(x), float(fx), converged, gn, msg, len(starts))


def covariance_from_hessian(H):
    """Inverse of the observed information; pseudo-inverse when near-singular.

    Returns (vcov, warning or None).
    """
    H = 0.5 * (H + H.T)
    eig = np.linalg.eigvalsh(H) if H.size else np.array([1.0])
    note = None
    if eig.min() <= 1e-10 * max(eig.max(), 1e-300):
        note = "observed information near-singular; pseudo-inverse used"
        vcov = np.linalg.pinv(H, rcond=1e-10, hermitian=True)
    else:
        vcov = np.linalg.inv(H)
    return 0.5 * (vcov + vcov.T), note
