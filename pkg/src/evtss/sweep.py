"""Threshold sensitivity sweeps for block-maxima and peaks-over-threshold fits."""
from __future__ import annotations

import csv
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from evtss.dataset import Series, empirical_collision_probability
from evtss.fit_pot import MIN_EXCEED, fit_gpd, pot_collision_probability
from evtss.fit_uni import MIN_N, NonStationarySpec, fit_gev
from evtss.prob import bm_collision_probability

VARIANTS = ("original", "normalized")
DEFAULT_GRID = tuple(round(0.6 + 0.1 * i, 10) for i in range(19))  # 0.6 .. 2.4 s


class SweepError(ValueError):
    pass


@dataclass(frozen=True)
class SweepPoint:
    threshold: float
    n: int
    status: str  # "ok" or "skipped"
    reason: str = ""
    family: str = ""
    params: dict = field(default_factory=dict)
    se: dict = field(default_factory=dict)
    p_model: float = float("nan")
    p_empirical: float = float("nan")

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    @property
    def xi(self) -> float:
        return self.params.get("xi", float("nan"))

    @property
    def xi_se(self) -> float:
        return self.se.get("xi", float("nan"))


@dataclass(frozen=True)
class SweepResult:
    method: str
    variant: str
    points: tuple[SweepPoint, ...]
    collisions: int
    warnings: tuple[str, ...] = ()

    @property
    def grid(self) -> tuple[float, ...]:
        return tuple(p.threshold for p in self.points)

    def successful(self) -> list[SweepPoint]:
        return [p for p in self.points if p.ok]

    def rows(self) -> list[dict]:
        keys = ["mu", "sigma", "xi"]
        out = []
        for p in self.points:
            row = {"method": self.method, "variant": self.variant, "threshold": p.threshold, "n": p.n,
                   "status": p.status, "reason": p.reason, "family": p.family}
            for k in keys:
                row[k] = p.params.get(k, "")
                row[f"{k}_se"] = p.se.get(k, "")
            row["p_model"] = p.p_model if p.ok else ""
            row["p_empirical"] = p.p_empirical
            out.append(row)
        return out

    def to_dict(self) -> dict:
        return {"method": self.method, "variant": self.variant, "collisions": self.collisions,
                "warnings": list(self.warnings), "points": self.rows()}

    def write_csv(self, path) -> None:
        rows = self.rows()
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            for r in rows:
                w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})


def _values(series) -> np.ndarray:
    v = np.asarray(getattr(series, "values", series), dtype=float)
    if not np.all(np.isfinite(v) & (v > 0)):
        raise ValueError("sweep input must be positive finite measure values")
    return v


def _check_grid(grid, variant):
    grid = tuple(float(g) for g in grid)
    if not grid or any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("grid must be non-empty and strictly increasing")
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    return grid


def _map(fn, items, threads):
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


def _finish(method, variant, points, collisions):
    if not any(p.ok for p in points):
        raise SweepError(f"every grid point was skipped ({points[0].reason if points else 'empty grid'})")
    notes = []
    pos = [p.threshold for p in points if p.ok and p.xi > 0]
    if pos:
        notes.append(f"positive shape estimates at thresholds {pos}")
    return SweepResult(method, variant, tuple(points), collisions, tuple(notes))


def sweep_bm(series, collisions: int, grid=DEFAULT_GRID, variant: str = "original", seed: int = 0,
             threads: int = 1) -> SweepResult:
    """Stationary GEV fits to the measure filtered below each grid value.

    The shape curve always comes from the free-shape fit. The model
    probability uses the Gumbel refit when the shape is within two SEs of 0.
    """
    x = _values(series)
    grid = _check_grid(grid, variant)

    def point(u):
        kept = x[x < u]
        n = int(kept.size)
        emp = empirical_collision_probability(collisions, n).p if n + collisions else float("nan")
        if n < MIN_N:
            return SweepPoint(u, n, "skipped", f"sample_size<{MIN_N}", p_empirical=emp)
        neg = -kept
        if variant == "normalized":
            neg = neg - neg.max()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            fit = fit_gev(neg, seed=seed)
        if not fit.converged:
            return SweepPoint(u, n, "skipped", "no_convergence", p_empirical=emp)
        chosen = fit
        if fit.prefers_gumbel():
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                g = fit_gev(neg, spec=NonStationarySpec(fix_shape_to_zero=True), seed=seed)
            if g.converged:
                chosen = g
        params = {"mu": float(fit.beta[0]), "sigma": fit.sigma, "xi": fit.xi}
        se = dict(zip(("mu", "sigma", "xi"), map(float, fit.se)))
        return SweepPoint(u, n, "ok", "", chosen.family, params, se,
                          bm_collision_probability(chosen.params()), emp)

    return _finish("bm", variant, _map(point, grid, threads), collisions)


def sweep_pot(series, collisions: int, grid=DEFAULT_GRID, variant: str = "original", seed: int = 0,
              threads: int = 1) -> SweepResult:
    """GPD fits to the negated measure over the threshold -u for each grid value u."""
    x = _values(series)
    grid = _check_grid(grid, variant)
    neg = -x
    shift = neg.max() if variant == "normalized" else 0.0
    neg = neg - shift

    def point(u):
        thr = -u - shift
        n = int(np.sum(neg > thr))
        emp = empirical_collision_probability(collisions, n).p if n + collisions else float("nan")
        if n < MIN_EXCEED:
            return SweepPoint(u, n, "skipped", f"exceedances<{MIN_EXCEED}", p_empirical=emp)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            fit = fit_gpd(Series(neg), thr, seed=seed)
        if not fit.converged:
            return SweepPoint(u, n, "skipped", "no_convergence", p_empirical=emp)
        pe = pot_collision_probability(fit, 0.0)
        params = {"sigma": fit.sigma, "xi": fit.xi}
        se = {"sigma": float(fit.se[0]), "xi": float(fit.se[1])}
        return SweepPoint(u, n, "ok", "", "gpd", params, se, float(pe.extra["conditional"]), emp)

    return _finish("pot", variant, _map(point, grid, threads), collisions)


def stable_region(sr: SweepResult, xi_tol: float = 0.1, min_width: float = 0.3) -> list[tuple[float, float]]:
    """Maximal windows of consecutive successful points whose shape range is within ``xi_tol``.

    A window is kept when no other window contains it, so under a slowly
    drifting shape two windows can overlap. Skipped points and points with non-finite SEs break a run. Runs narrower
    than ``min_width`` (in threshold units) are dropped.
    """
    runs, cur = [], []
    for p in sr.points:
        if p.ok and np.isfinite(p.xi) and np.isfinite(p.xi_se):
            cur.append(p)
        else:
            if cur:
                runs.append(cur)
            cur = []
    if cur:
        runs.append(cur)
    if sum(len(r) for r in runs) < 3:
        return []
    out = []
    for run in runs:
        xi = np.array([p.xi for p in run])
        t = [p.threshold for p in run]
        last_j = -1
        for i in range(len(run)):
            j = i
            while j + 1 < len(run) and np.ptp(xi[i: j + 2]) <= xi_tol:
                j += 1
            if j > last_j:
                if t[j] - t[i] >= min_width - 1e-9:
                    out.append((t[i], t[j]))
                last_j = j
    return out
