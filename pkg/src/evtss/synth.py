"""Synthetic passing-maneuver data with known generating parameters.

Each maneuver gets covariates, a location for each negated measure, and a
pair (-TTC, -THW) drawn from the bivariate logistic extreme-value model.
A maneuver is a collision when a negated value reaches 0.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from evtss.bivar.logistic import gev_from_t, logistic_copula, sample_logistic_t
from evtss.dataset import ManeuverDataset, ManeuverRecord
from evtss.prob import exceedance_at_zero

KINDS = ("bernoulli", "uniform", "normal", "categorical")
_CHUNK = 1_000_000


@dataclass(frozen=True)
class CovariateGen:
    """One covariate generator.

    ``params`` by kind: bernoulli (p,), uniform (lo, hi), normal (mean, sd),
    categorical (p_1, ..., p_m) over ``levels``. Categorical covariates
    expand to indicator columns ``name_level`` for every level but the first.
    """

    name: str
    kind: str
    params: tuple[float, ...]
    levels: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        object.__setattr__(self, "levels", tuple(self.levels))
        if self.kind not in KINDS:
            raise ValueError(f"unknown covariate kind {self.kind!r}")
        if self.kind == "bernoulli" and not 0 <= self.params[0] <= 1:
            raise ValueError(f"{self.name}: probability outside [0, 1]")
        if self.kind == "uniform" and not self.params[0] < self.params[1]:
            raise ValueError(f"{self.name}: need lo < hi")
        if self.kind == "normal" and not self.params[1] >= 0:
            raise ValueError(f"{self.name}: negative sd")
        if self.kind == "categorical":
            if len(self.levels) != len(self.params) or len(self.levels) < 2:
                raise ValueError(f"{self.name}: one probability per level, at least two levels")
            if min(self.params) < 0 or abs(sum(self.params) - 1) > 1e-9:
                raise ValueError(f"{self.name}: proportions must be non-negative and sum to 1")

    @property
    def columns(self) -> tuple[str, ...]:
        if self.kind == "categorical":
            return tuple(f"{self.name}_{lv}" for lv in self.levels[1:])
        return (self.name,)

    def draw(self, n, rng) -> np.ndarray:
        p = self.params
        if self.kind == "bernoulli":
            return (rng.uniform(size=n) < p[0]).astype(float)[:, None]
        if self.kind == "uniform":
            return rng.uniform(p[0], p[1], size=n)[:, None]
        if self.kind == "normal":
            return rng.normal(p[0], p[1], size=n)[:, None]
        idx = rng.choice(len(p), size=n, p=np.asarray(p) / sum(p))
        return (idx[:, None] == np.arange(1, len(p))[None, :]).astype(float)

    def mean(self) -> np.ndarray:
        p = self.params
        if self.kind == "bernoulli":
            return np.array([p[0]])
        if self.kind == "uniform":
            return np.array([(p[0] + p[1]) / 2])
        if self.kind == "normal":
            return np.array([p[0]])
        return np.asarray(p[1:])


@dataclass(frozen=True)
class MarginSpec:
    """GEV margin of a negated measure with location intercept + coefs . covariates."""

    intercept: float
    sigma: float
    xi: float = 0.0
    coefs: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not self.xi > -1:
            raise ValueError("xi must exceed -1")

    def location(self, X, columns) -> np.ndarray:
        mu = np.full(X.shape[0], float(self.intercept))
        for name, c in self.coefs.items():
            mu = mu + c * X[:, columns.index(name)]
        return mu


@dataclass(frozen=True)
class SynthConfig:
    n_maneuvers: int
    ttc: MarginSpec
    thw: MarginSpec
    r: float = 1.0
    covariates: tuple[CovariateGen, ...] = ()
    seed: int = 0

    def __post_init__(self):
        if self.n_maneuvers < 1:
            raise ValueError("n_maneuvers must be positive")
        if not 0 < self.r <= 1:
            raise ValueError("r must lie in (0, 1]")
        cols = self.columns
        if len(set(cols)) != len(cols):
            raise ValueError("duplicate covariate columns")
        for m in (self.ttc, self.thw):
            unknown = set(m.coefs) - set(cols)
            if unknown:
                raise ValueError(f"coefficients for unknown covariates: {sorted(unknown)}")

    @property
    def columns(self) -> tuple[str, ...]:
        return tuple(c for g in self.covariates for c in g.columns)

    @property
    def stationary(self) -> bool:
        return not any(self.ttc.coefs.values()) and not any(self.thw.coefs.values())

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> SynthConfig:
        return cls(
            n_maneuvers=int(d["n_maneuvers"]),
            ttc=MarginSpec(**d["ttc"]),
            thw=MarginSpec(**d["thw"]),
            r=float(d.get("r", 1.0)),
            covariates=tuple(CovariateGen(**g) for g in d.get("covariates", ())),
            seed=int(d.get("seed", 0)),
        )

    @classmethod
    def from_json(cls, path) -> SynthConfig:
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def default_covariates() -> tuple[CovariateGen, ...]:
    return (
        CovariateGen("speed_opposing", "uniform", (60.0, 85.0)),
        CovariateGen("speed_passed", "uniform", (60.0, 85.0)),
        CovariateGen("volume_high", "bernoulli", (0.5,)),
        CovariateGen("curve", "bernoulli", (0.5,)),
        CovariateGen("male", "bernoulli", (0.64,)),
        CovariateGen("age", "categorical", (0.67, 0.20, 0.13), ("18_24", "25_34", "35_plus")),
        CovariateGen("style_risky", "normal", (0.0, 1.0)),
    )


# Population-average margins chosen so that 1287 maneuvers give about 9
# head-on and 2 rear-end collisions, with about 37% of maneuvers below
# TTC 1.5 s and 38% below THW 2.0 s.
_TTC_MEAN = (-1.986, 0.679, -0.236)
_THW_MEAN = (-2.253, 0.348, 0.0)


def calibrated_config(seed: int = 0, n_maneuvers: int = 1287, r: float = 0.865) -> SynthConfig:
    covs = default_covariates()
    ttc_coefs = {"speed_opposing": 0.012, "male": 0.08, "volume_high": -0.06, "style_risky": 0.05}
    thw_coefs = {"speed_passed": 0.006, "curve": 0.05}
    cols = tuple(c for g in covs for c in g.columns)
    means = dict(zip(cols, np.concatenate([g.mean() for g in covs])))

    def centred(base, coefs):
        mu, sigma, xi = base
        return MarginSpec(mu - sum(c * means[k] for k, c in coefs.items()), sigma, xi, coefs)

    return SynthConfig(n_maneuvers, centred(_TTC_MEAN, ttc_coefs), centred(_THW_MEAN, thw_coefs), r, covs, seed)


def stationary_config(ttc=(-1.456, 0.256, 0.0), thw=(-1.456, 0.256, 0.0), r=1.0, n_maneuvers=1000,
                      seed=0) -> SynthConfig:
    return SynthConfig(n_maneuvers, MarginSpec(ttc[0], ttc[1], ttc[2]), MarginSpec(thw[0], thw[1], thw[2]), r,
                       (), seed)


@dataclass(frozen=True)
class SynthSample:
    """Raw draws: negated measures, design matrix and true locations."""

    neg_ttc: np.ndarray
    neg_thw: np.ndarray
    X: np.ndarray
    columns: tuple[str, ...]
    mu_ttc: np.ndarray
    mu_thw: np.ndarray


def _draw(config: SynthConfig, n: int, seq: np.random.SeedSequence) -> SynthSample:
    cov_seq, dep_seq = seq.spawn(2)
    rng = np.random.default_rng(cov_seq)
    blocks = [g.draw(n, rng) for g in config.covariates]
    X = np.column_stack(blocks) if blocks else np.empty((n, 0))
    cols = config.columns
    mu1 = config.ttc.location(X, cols)
    mu2 = config.thw.location(X, cols)
    t = sample_logistic_t(n, config.r, np.random.default_rng(dep_seq))
    x = gev_from_t(t[0], mu1, config.ttc.sigma, config.ttc.xi)
    y = gev_from_t(t[1], mu2, config.thw.sigma, config.thw.xi)
    return SynthSample(x, y, X, cols, mu1, mu2)


def generate_raw(config: SynthConfig) -> SynthSample:
    return _draw(config, config.n_maneuvers, np.random.SeedSequence(config.seed))


def _collision_kind(x, y) -> str:
    if x < 0 and y < 0:
        return "none"
    return "head_on" if x >= y else "rear_end"


def to_dataset(sample: SynthSample, provenance: str = "synthetic") -> ManeuverDataset:
    """Records with TTC = -x and THW = -y.

    A maneuver reaching 0 on both scales is labelled by the larger value.
    """
    records = []
    for i in range(len(sample.neg_ttc)):
        x, y = float(sample.neg_ttc[i]), float(sample.neg_thw[i])
        cov = {c: float(sample.X[i, j]) for j, c in enumerate(sample.columns)}
        records.append(ManeuverRecord(ttc=-x, thw=-y, covariates=cov, collided=_collision_kind(x, y)))
    return ManeuverDataset(tuple(records), provenance=provenance)


def generate(config: SynthConfig) -> ManeuverDataset:
    """Deterministic in ``config.seed``."""
    return to_dataset(generate_raw(config), provenance=f"synthetic seed={config.seed}")


@dataclass(frozen=True)
class TrueProbabilities:
    """Per-maneuver collision probabilities of a config.

    ``p_*`` are brute-force frequencies over ``n_sim`` simulated maneuvers
    with binomial standard errors in ``se``. ``semi_analytic`` averages the
    exact per-maneuver probabilities over the same simulated covariates;
    ``closed_form`` is filled for stationary configs only.
    """

    p_head_on: float
    p_rear_end: float
    p_joint: float
    se: dict
    n_sim: int
    semi_analytic: dict
    closed_form: dict | None

    def to_dict(self) -> dict:
        return asdict(self)


def _exact(mu1, mu2, config):
    p1 = exceedance_at_zero(mu1, config.ttc.sigma, config.ttc.xi)
    p2 = exceedance_at_zero(mu2, config.thw.sigma, config.thw.xi)
    F0, G0 = 1 - p1, 1 - p2
    C = logistic_copula(F0, G0, config.r)
    return p1, p2, 1 - C


def true_collision_probability(config: SynthConfig, n_sim: int = 10_000_000, seed: int | None = None
                               ) -> TrueProbabilities:
    """Brute-force simulation oracle, cross-checked in closed form when stationary."""
    seq = np.random.SeedSequence([config.seed if seed is None else seed, 0x7E57])
    sizes = [_CHUNK] * (n_sim // _CHUNK) + ([n_sim % _CHUNK] if n_sim % _CHUNK else [])
    hits = np.zeros(3)
    exact = np.zeros(3)
    for n, s in zip(sizes, seq.spawn(len(sizes))):
        d = _draw(config, n, s)
        a, b = d.neg_ttc >= 0, d.neg_thw >= 0
        hits += [a.sum(), b.sum(), (a | b).sum()]
        exact += [float(np.sum(v)) for v in _exact(d.mu_ttc, d.mu_thw, config)]
    p = hits / n_sim
    se = np.sqrt(p * (1 - p) / n_sim)
    names = ("head_on", "rear_end", "joint")
    closed = None
    if config.stationary:
        vals = _exact(np.array([config.ttc.intercept]), np.array([config.thw.intercept]), config)
        closed = {k: float(v[0]) for k, v in zip(names, vals)}
    return TrueProbabilities(
        p_head_on=float(p[0]), p_rear_end=float(p[1]), p_joint=float(p[2]),
        se=dict(zip(names, map(float, se))), n_sim=n_sim,
        semi_analytic=dict(zip(names, map(float, exact / n_sim))), closed_form=closed,
    )


def with_seed(config: SynthConfig, seed: int) -> SynthConfig:
    return replace(config, seed=seed)


@dataclass(frozen=True)
class TailSeries:
    """Positive measure values whose negated tail beyond ``-tail_start`` is exactly GPD."""

    values: np.ndarray
    collisions: int
    tail_start: float
    sigma: float
    xi: float


def gpd_tail_series(n: int, tail_start: float = 1.5, sigma: float = 0.35, xi: float = -0.2,
                    tail_frac: float = 0.4, body_scale: float = 0.6, seed: int = 0) -> TailSeries:
    """TTC-like sample: with probability ``tail_frac`` the value is
    ``tail_start - Y`` with Y ~ GPD(sigma, xi), otherwise ``tail_start + Gamma(2, body_scale)``.

    For any threshold u <= tail_start on the measure scale, excesses of the
    negated values over -u are GPD with the same shape, which makes
    [smallest usable threshold, tail_start] the valid tail range. Values
    at or below 0 are counted as collisions and removed.
    """
    rng = np.random.default_rng(seed)
    in_tail = rng.uniform(size=n) < tail_frac
    q = rng.uniform(size=n)
    if abs(xi) < 1e-12:
        y = -np.log1p(-q) * sigma
    else:
        y = sigma * np.expm1(-xi * np.log1p(-q)) / xi
    body = tail_start + rng.gamma(2.0, body_scale, size=n)
    v = np.where(in_tail, tail_start - y, body)
    hit = v <= 0
    return TailSeries(v[~hit], int(hit.sum()), tail_start, sigma, xi)


@dataclass(frozen=True)
class TargetCounts:
    """Exact composition for stratified generation."""

    n_maneuvers: int = 1287
    head_on: int = 9
    rear_end: int = 2
    ttc_limit: float = 1.5
    ttc_below: int = 463
    thw_limit: float = 2.0
    thw_below: int = 492


def generate_with_counts(config: SynthConfig, target: TargetCounts = TargetCounts(),
                         pool_factor: int = 20) -> ManeuverDataset:
    """Stratified draw that hits ``target`` exactly.

    A pool of maneuvers is simulated from ``config`` and split into cells:
    head-on, rear-end, and the four non-collision cells defined by the two
    limits. Cell sizes are fixed so the margins match the target, keeping
    the pool's within-margin association as closely as integers allow;
    records are then taken from each cell in pool order.
    """
    non = target.n_maneuvers - target.head_on - target.rear_end
    if min(target.ttc_below, target.thw_below) < 0 or max(target.ttc_below, target.thw_below) > non:
        raise ValueError("target counts are inconsistent")
    for extra in range(8):
        pool = _draw(config, pool_factor * target.n_maneuvers * (extra + 1),
                     np.random.SeedSequence([config.seed, 0xC0, extra]))
        kinds = np.array([_collision_kind(a, b) for a, b in zip(pool.neg_ttc, pool.neg_thw)])
        ok = kinds == "none"
        a = ok & (-pool.neg_ttc < target.ttc_limit)
        b = ok & (-pool.neg_thw < target.thw_limit)
        cells = {
            "ab": np.flatnonzero(a & b), "a": np.flatnonzero(a & ~b),
            "b": np.flatnonzero(~a & b), "-": np.flatnonzero(ok & ~a & ~b),
        }
        n_ok = ok.sum()
        both = int(round(len(cells["ab"]) / n_ok * non))
        both = max(both, target.ttc_below + target.thw_below - non, 0)
        both = min(both, target.ttc_below, target.thw_below)
        want = {"ab": both, "a": target.ttc_below - both, "b": target.thw_below - both,
                "-": non - target.ttc_below - target.thw_below + both}
        want_c = {"head_on": target.head_on, "rear_end": target.rear_end}
        if all(len(cells[k]) >= v for k, v in want.items()) and all(
                np.sum(kinds == k) >= v for k, v in want_c.items()):
            break
    else:
        raise ValueError("pool too small for the requested counts")
    idx = np.concatenate([cells[k][:v] for k, v in want.items()]
                         + [np.flatnonzero(kinds == k)[:v] for k, v in want_c.items()])
    order = np.random.default_rng(np.random.SeedSequence([config.seed, 0xC1])).permutation(len(idx))
    idx = idx[order]
    sub = SynthSample(pool.neg_ttc[idx], pool.neg_thw[idx], pool.X[idx], pool.columns, pool.mu_ttc[idx],
                      pool.mu_thw[idx])
    return to_dataset(sub, provenance=f"synthetic stratified seed={config.seed}")
