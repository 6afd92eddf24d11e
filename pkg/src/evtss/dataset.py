"""Maneuver records, CSV ingestion, filters and the negate/normalize transforms."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping

import numpy as np
from scipy import stats

from evtss.estimate import ProbEstimate

MEASURES = ("ttc", "thw")
COLLISION_KINDS = ("none", "head_on", "rear_end")
# collision kind whose surrogate is each measure
MEASURE_COLLISION = {"ttc": "head_on", "thw": "rear_end"}


class SchemaError(ValueError):
    pass


class RowParseError(ValueError):
    def __init__(self, row: int, column: str, value: str, reason: str = "not numeric"):
        self.row = row
        self.column = column
        super().__init__(f"row {row}: column {column!r} value {value!r} {reason}")


@dataclass(frozen=True)
class ManeuverRecord:
    ttc: float
    thw: float
    covariates: Mapping[str, float] = field(default_factory=dict)
    collided: str = "none"

    def __post_init__(self):
        if self.collided not in COLLISION_KINDS:
            raise ValueError(f"collided must be one of {COLLISION_KINDS}")
        if self.collided == "none":
            for name in MEASURES:
                v = getattr(self, name)
                if not (math.isfinite(v) and v > 0):
                    raise ValueError(f"{name} must be finite and > 0 for non-collision records")


@dataclass(frozen=True)
class Series:
    values: np.ndarray
    unit: str = "s"
    transform_chain: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class ManeuverDataset:
    records: tuple[ManeuverRecord, ...]
    provenance: str = ""
    filter_log: tuple[dict, ...] = ()

    def __len__(self):
        return len(self.records)

    @property
    def covariate_names(self) -> tuple[str, ...]:
        return tuple(self.records[0].covariates) if self.records else ()

    def collision_counts(self) -> dict[str, int]:
        counts = {k: 0 for k in COLLISION_KINDS if k != "none"}
        for rec in self.records:
            if rec.collided != "none":
                counts[rec.collided] += 1
        return counts

    def estimation_records(self) -> tuple[ManeuverRecord, ...]:
        return tuple(r for r in self.records if r.collided == "none")

    def series(self, measure: str) -> Series:
        """Measure values over the non-collision records."""
        _check_measure(measure)
        vals = [getattr(r, measure) for r in self.estimation_records()]
        return Series(np.array(vals, dtype=float), unit="s")

    def covariate_matrix(self, names, interactions: Mapping | None = None) -> np.ndarray:
        """Design columns (no intercept) over the non-collision records."""
        recs = self.estimation_records()
        return design_matrix([r.covariates for r in recs], names, interactions)

    @property
    def excluded_collisions(self) -> dict[str, int]:
        """Collision counts recorded by the most recent filter, if any."""
        if self.filter_log:
            return dict(self.filter_log[-1]["collisions"])
        return self.collision_counts()


def design_matrix(covariate_rows, names, interactions: Mapping | None = None) -> np.ndarray:
    """Stack named covariates column-wise.

    ``interactions`` maps a derived name to ``((column, level), ...)``; the
    derived column is the product of the indicators ``column == level``.
    """
    interactions = dict(interactions or {})
    cols = []
    for name in names:
        if name in interactions:
            col = np.ones(len(covariate_rows))
            for base, level in interactions[name]:
                col = col * np.array([float(row[base] == level) for row in covariate_rows])
        else:
            try:
                col = np.array([float(row[name]) for row in covariate_rows])
            except KeyError:
                raise SchemaError(f"unknown covariate {name!r}") from None
        cols.append(col)
    if not cols:
        return np.empty((len(covariate_rows), 0))
    return np.column_stack(cols)


def _check_measure(measure):
    if measure not in MEASURES:
        raise ValueError(f"measure must be one of {MEASURES}, got {measure!r}")


def load_csv(path, schema: Mapping[str, str] | None = None, provenance: str | None = None) -> ManeuverDataset:
    """Read a maneuver CSV.

    ``schema`` maps logical names (``ttc``, ``thw``, optional ``collided`` and
    any covariate names) to CSV column names. Without a schema, ``ttc``,
    ``thw`` and ``collided`` are read by name and every other column is a
    covariate.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if schema is None:
            schema = {h: h for h in header}
        schema = dict(schema)
        for logical in ("ttc", "thw"):
            schema.setdefault(logical, logical)
        if "collided" not in schema and "collided" in header:
            schema["collided"] = "collided"
        missing = [col for col in schema.values() if col not in header]
        if missing:
            raise SchemaError(f"{path}: missing column {missing[0]!r}")
        index = {logical: header.index(col) for logical, col in schema.items()}
        cov_names = [k for k in schema if k not in ("ttc", "thw", "collided")]

        records = []
        for rowno, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            collided = "none"
            if "collided" in index:
                collided = row[index["collided"]].strip() or "none"
                if collided not in COLLISION_KINDS:
                    raise RowParseError(rowno, schema["collided"], collided, "is not a collision kind")
            vals = {}
            for logical in ["ttc", "thw", *cov_names]:
                raw = row[index[logical]].strip() if index[logical] < len(row) else ""
                try:
                    v = float(raw)
                except ValueError:
                    raise RowParseError(rowno, schema[logical], raw) from None
                if not math.isfinite(v):
                    raise RowParseError(rowno, schema[logical], raw, "is not finite")
                vals[logical] = v
            if collided == "none":
                for m in MEASURES:
                    if vals[m] <= 0:
                        raise RowParseError(rowno, schema[m], str(vals[m]), "must be > 0 without a collision")
            records.append(
                ManeuverRecord(
                    ttc=vals["ttc"],
                    thw=vals["thw"],
                    covariates={k: vals[k] for k in cov_names},
                    collided=collided,
                )
            )
    return ManeuverDataset(tuple(records), provenance=provenance or str(path))


def write_csv(ds: ManeuverDataset, path) -> None:
    names = list(ds.covariate_names)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["ttc", "thw", "collided", *names])
        for r in ds.records:
            w.writerow([repr(r.ttc), repr(r.thw), r.collided, *(repr(float(r.covariates[n])) for n in names)])


def filter_threshold(ds: ManeuverDataset, measure: str, limit: float) -> ManeuverDataset:
    """Keep non-collision records with ``measure < limit``.

    Collision records are dropped from the returned set; their counts are
    kept in the appended filter-log entry. Re-applying a filter already in
    the log returns ``ds`` unchanged.
    """
    _check_measure(measure)
    if not limit > 0:
        raise ValueError(f"limit must be > 0, got {limit}")
    entry = {"filter": "threshold", "measure": measure, "limit": float(limit)}
    for logged in ds.filter_log:
        if {k: logged[k] for k in entry} == entry:
            return ds
    counts = ds.collision_counts()
    if ds.filter_log:
        counts = {k: counts[k] + ds.filter_log[-1]["collisions"][k] for k in counts}
    kept = tuple(r for r in ds.records if r.collided == "none" and getattr(r, measure) < limit)
    entry["n_before"] = len(ds.records)
    entry["n_after"] = len(kept)
    entry["collisions"] = counts
    return replace(ds, records=kept, filter_log=ds.filter_log + (entry,))


def replay_filters(ds: ManeuverDataset, filter_log) -> ManeuverDataset:
    for entry in filter_log:
        if entry["filter"] != "threshold":
            raise ValueError(f"unknown filter {entry['filter']!r}")
        ds = filter_threshold(ds, entry["measure"], entry["limit"])
    return ds


def dump_filter_log(ds: ManeuverDataset, path) -> None:
    Path(path).write_text(json.dumps(list(ds.filter_log), indent=2), encoding="utf-8")


def negate(s: Series) -> Series:
    return Series(-s.values, unit=s.unit, transform_chain=s.transform_chain + (("negate",),))


def normalize_to_sample_max(s: Series) -> tuple[Series, float]:
    """Negate and shift so the maximum is exactly 0.

    Returns the normalized series and the shift, the maximum of the negated
    input. Undo with ``values + shift`` then negation.
    """
    if len(s) == 0:
        raise ValueError("cannot normalize an empty series")
    neg = negate(s)
    shift = float(np.max(neg.values))
    out = Series(
        neg.values - shift,
        unit=s.unit,
        transform_chain=neg.transform_chain + (("shift", -shift),),
    )
    return out, shift


def undo_transforms(s: Series) -> Series:
    vals = s.values
    for step in reversed(s.transform_chain):
        if step[0] == "negate":
            vals = -vals
        elif step[0] == "shift":
            vals = vals - step[1]
    return Series(vals, unit=s.unit)


def empirical_collision_probability(k: int, n: int, level: float = 0.95) -> ProbEstimate:
    """k/(n+k) with a normal-approximation binomial interval.

    The interval is not clamped, so the lower bound can be negative.
    """
    if k < 0 or n < 0:
        raise ValueError("counts must be non-negative")
    total = k + n
    if total == 0:
        raise ValueError("k + n must be positive")
    if not 0 < level < 1:
        raise ValueError("level must be in (0, 1)")
    p = k / total
    z = stats.norm.ppf(0.5 + level / 2)
    half = z * math.sqrt(p * (1 - p) / total)
    return ProbEstimate(p=p, ci=(p - half, p + half), method="empirical", level=level,
                        extra={"k": k, "n": n})
