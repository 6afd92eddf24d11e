import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from evtss.dataset import (
    ManeuverDataset,
    ManeuverRecord,
    RowParseError,
    SchemaError,
    Series,
    empirical_collision_probability,
    filter_threshold,
    load_csv,
    negate,
    normalize_to_sample_max,
    replay_filters,
    undo_transforms,
    write_csv,
)
from evtss.synth import generate_with_counts, calibrated_config

positive = st.floats(min_value=1e-3, max_value=50.0, allow_nan=False)


def _ds(ttc_values, collided=()):
    recs = [ManeuverRecord(ttc=v, thw=1.0) for v in ttc_values]
    recs += [ManeuverRecord(ttc=0.0, thw=0.0, collided=c) for c in collided]
    return ManeuverDataset(tuple(recs))


def test_load_three_rows(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text("ttc,thw,gender\n1.2,2.0,1\n0.8,1.5,0\n2.5,3.1,1\n")
    ds = load_csv(p)
    assert len(ds) == 3
    assert ds.covariate_names == ("gender",)
    assert ds.records[1].covariates["gender"] == 0.0


def test_schema_names_missing_column(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text("ttc,thw\n1.0,2.0\n")
    with pytest.raises(SchemaError, match="passinggap"):
        load_csv(p, schema={"ttc": "ttc", "thw": "thw", "gap": "passinggap"})


def test_non_numeric_cell_reports_row(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text("ttc,thw,speed\n1.0,2.0,80\n1.1,2.0,fast\n")
    with pytest.raises(RowParseError) as err:
        load_csv(p)
    assert err.value.row == 2 and err.value.column == "speed"


def test_missing_covariate_cell_rejected(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text("ttc,thw,speed\n1.0,2.0,\n")
    with pytest.raises(RowParseError):
        load_csv(p)


def test_full_scale_roundtrip(tmp_path):
    ds = generate_with_counts(calibrated_config(seed=4))
    path = tmp_path / "maneuvers.csv"
    write_csv(ds, path)
    back = load_csv(path)
    assert len(back) == 1287
    assert sum(back.collision_counts().values()) == 11
    assert len(filter_threshold(back, "ttc", 1.5)) == 463
    assert len(filter_threshold(back, "thw", 2.0)) == 492


def test_filter_strict_less_than():
    ds = filter_threshold(_ds([0.4, 1.6, 1.2, 1.5]), "ttc", 1.5)
    assert sorted(r.ttc for r in ds.records) == [0.4, 1.2]


def test_filter_keeps_collision_counts_in_log():
    ds = filter_threshold(_ds([0.4, 1.6], collided=("head_on", "head_on", "rear_end")), "ttc", 1.5)
    assert ds.excluded_collisions == {"head_on": 2, "rear_end": 1}
    assert len(ds) == 1


def test_filter_domain_error():
    with pytest.raises(ValueError):
        filter_threshold(_ds([1.0]), "ttc", 0.0)
    with pytest.raises(ValueError):
        filter_threshold(_ds([1.0]), "speed", 1.0)


@given(st.lists(positive, min_size=1, max_size=30), st.floats(min_value=0.1, max_value=10))
def test_filter_idempotent(values, limit):
    once = filter_threshold(_ds(values), "ttc", limit)
    twice = filter_threshold(once, "ttc", limit)
    assert twice == once


def test_replay_filters_matches():
    ds = _ds([0.3, 0.9, 2.0, 3.0])
    f = filter_threshold(filter_threshold(ds, "ttc", 2.5), "thw", 2.0)
    assert replay_filters(ds, f.filter_log).records == f.records


def test_negate():
    assert negate(Series(np.array([1.0, 0.5]))).values.tolist() == [-1.0, -0.5]


def test_normalize_example():
    out, shift = normalize_to_sample_max(Series(np.array([1.0, 0.5, 2.0])))
    assert shift == -0.5
    np.testing.assert_allclose(out.values, [-0.5, 0.0, -1.5])


def test_normalize_constant_and_empty():
    out, _ = normalize_to_sample_max(Series(np.full(4, 2.3)))
    assert np.all(out.values == 0)
    with pytest.raises(ValueError):
        normalize_to_sample_max(Series(np.array([])))


@given(st.lists(positive, min_size=1, max_size=50))
def test_normalize_roundtrip(values):
    s = Series(np.array(values))
    out, _ = normalize_to_sample_max(s)
    assert out.values.max() == 0.0
    np.testing.assert_allclose(undo_transforms(out).values, s.values, rtol=0, atol=1e-12 * max(values))


@pytest.mark.parametrize(
    "k,n,p,lo,hi",
    [(9, 463, 0.0191, 0.0067, 0.0314), (2, 492, 0.00405, -0.00155, 0.00964), (0, 100, 0.0, 0.0, 0.0)],
)
def test_empirical_examples(k, n, p, lo, hi):
    est = empirical_collision_probability(k, n)
    assert est.p == pytest.approx(p, abs=1e-4)
    assert est.ci[0] == pytest.approx(lo, abs=1e-4)
    assert est.ci[1] == pytest.approx(hi, abs=1e-4)


def test_empirical_errors():
    with pytest.raises(ValueError):
        empirical_collision_probability(0, 0)
    with pytest.raises(ValueError):
        empirical_collision_probability(1, 10, level=1.0)


@given(st.integers(0, 200), st.integers(1, 5000))
def test_empirical_properties(k, n):
    est = empirical_collision_probability(k, n)
    assert 0.0 <= est.p <= 1.0
    bigger = empirical_collision_probability(4 * k, 4 * n)
    half = (est.ci[1] - est.ci[0]) / 2
    half4 = (bigger.ci[1] - bigger.ci[0]) / 2
    # same proportion, four times the count: half-width halves
    assert half4 == pytest.approx(half / 2, rel=1e-9, abs=1e-15)


def test_collision_record_validation():
    with pytest.raises(ValueError):
        ManeuverRecord(ttc=-1.0, thw=1.0)
    with pytest.raises(ValueError):
        ManeuverRecord(ttc=1.0, thw=1.0, collided="sideswipe")
    assert math.isclose(ManeuverRecord(ttc=0.0, thw=0.5, collided="head_on").ttc, 0.0)
