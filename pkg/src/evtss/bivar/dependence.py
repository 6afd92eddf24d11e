"""Dependence diagnostics and the joint collision probability."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from evtss.bivar.copula import CopulaFit, pseudo_observations
from evtss.bivar.logistic import logistic_copula
from evtss.estimate import ProbEstimate


def _arr(x):
    return np.asarray(getattr(x, "values", x), dtype=float)


def pearson(x, y) -> tuple[float, float]:
    res = stats.pearsonr(_arr(x), _arr(y))
    return float(res.statistic), float(res.pvalue)


def kendall_tau(x, y) -> tuple[float, float]:
    """Tau-b with the normal-approximation test of tau = 0."""
    x, y = _arr(x), _arr(y)
    if x.size < 2:
        raise ValueError("need at least two pairs")
    res = stats.kendalltau(x, y, variant="b", method="asymptotic")
    return float(res.statistic), float(res.pvalue)


def _cvm_parts(u, v):
    A = 1.0 - np.maximum(u[:, None], u[None, :])
    B = 1.0 - np.maximum(v[:, None], v[None, :])
    return A, B


def cvm_independence_statistic(u, v) -> float:
    """n * int int (C_n(u, v) - u v)^2 du dv, in closed form."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    n = u.size
    A, B = _cvm_parts(u, v)
    cross = np.sum((1 - u**2) * (1 - v**2)) / 4.0
    return float(np.sum(A * B) / n - 2.0 * cross + n / 9.0)


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    n_bootstrap: int = 0

    def to_dict(self) -> dict:
        return {"statistic": self.statistic, "p_value": self.p_value, "n_bootstrap": self.n_bootstrap}


def cvm_independence_test(x, y, n_bootstrap: int = 2000, seed: int = 0) -> TestResult:
    """Global Cramer-von Mises test of independence on pseudo-observations.

    The null distribution comes from permuting one margin, so the p-value
    is (1 + #{S* >= S}) / (B + 1).
    """
    x, y = _arr(x), _arr(y)
    if x.size < 20:
        raise ValueError(f"need at least 20 pairs, got {x.size}")
    p = pseudo_observations(x, y)
    order = np.argsort(p.u)
    u, v = p.u[order], p.v[order]
    n = u.size
    A, _ = _cvm_parts(u, v)
    s0 = cvm_independence_statistic(u, v)
    rng = np.random.default_rng(seed)
    wu = 1 - u**2
    exceed = 0
    for _ in range(n_bootstrap):
        vp = v[rng.permutation(n)]
        B = 1.0 - np.maximum(vp[:, None], vp[None, :])
        s = float(np.sum(A * B) / n - 0.5 * np.sum(wu * (1 - vp**2)) + n / 9.0)
        exceed += s >= s0 - 1e-12 * abs(s0)
    return TestResult(s0, (1 + exceed) / (n_bootstrap + 1), n_bootstrap)


def collision_decomposition(F0: float, G0: float, C: float) -> dict:
    """Split the joint event using the copula value C = C(F0, G0).

    F0/G0 are the margins' CDFs at the collision boundary. 'head_on' and
    'rear_end' are the marginal exceedance probabilities; the '_only'
    entries exclude the other type; 'both' is the joint exceedance.
    """
    return {
        "any": 1.0 - C,
        "head_on": 1.0 - F0,
        "rear_end": 1.0 - G0,
        "head_on_only": G0 - C,
        "rear_end_only": F0 - C,
        "both": 1.0 - F0 - G0 + C,
    }


def joint_collision_probability(F0: float, G0: float, dependence) -> ProbEstimate:
    """P(at least one negated measure reaches 0) = 1 - C(F0, G0).

    ``dependence`` is either the logistic parameter r or a CopulaFit.
    """
    for name, val in (("F0", F0), ("G0", G0)):
        if not 0 < val <= 1:
            raise ValueError(f"{name} must lie in (0, 1], got {val}")
    if isinstance(dependence, CopulaFit):
        C = float(dependence.cdf(F0, G0))
        tag = dependence.family
    else:
        C = float(logistic_copula(F0, G0, float(dependence)))
        tag = "logistic"
    parts = collision_decomposition(F0, G0, C)
    return ProbEstimate(p=min(max(parts["any"], 0.0), 1.0), ci=None, method="bivariate",
                        extra={"dependence": tag, "F0": F0, "G0": G0, **parts})
