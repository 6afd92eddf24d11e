import numpy as np
import pytest

from evtss.sweep import SweepError, SweepPoint, SweepResult, stable_region, sweep_bm, sweep_pot
from evtss.synth import gpd_tail_series


@pytest.fixture(scope="module")
def tail():
    return gpd_tail_series(6000, seed=2)


def _result(xis, status=None):
    status = status or ["ok"] * len(xis)
    pts = tuple(
        SweepPoint(round(0.6 + 0.1 * i, 10), 100, s, "" if s == "ok" else "exceedances<10", "gpd",
                   {"sigma": 0.3, "xi": x}, {"sigma": 0.01, "xi": 0.05}, 0.01, 0.01)
        for i, (x, s) in enumerate(zip(xis, status))
    )
    return SweepResult("pot", "original", pts, 3)


def test_stable_region_constant_curve():
    assert stable_region(_result([-0.2] * 10)) == [(0.6, 1.5)]


def test_stable_region_alternating():
    assert stable_region(_result([0.5, -0.5] * 5), xi_tol=0.1) == []


def test_skipped_points_break_runs():
    st = ["ok"] * 4 + ["skipped"] + ["ok"] * 5
    assert stable_region(_result([0.0] * 10, st)) == [(0.6, 0.9), (1.1, 1.5)]


def test_sweep_pot_structure(tail):
    grid = (0.2, 0.6, 1.0, 1.4, 1.8)
    res = sweep_pot(tail.values, tail.collisions, grid=grid)
    assert res.grid == grid
    for p in res.points:
        assert p.ok or p.reason
    assert res.points[0].reason.startswith("exceedances")
    ok = [p for p in res.points if p.ok and p.threshold <= 1.5]
    for p in ok:
        assert abs(p.xi - tail.xi) <= 3 * p.xi_se
    assert all(0 <= p.p_model <= 1 for p in res.successful())


def test_sweep_bm_skips_small_samples(tail):
    res = sweep_bm(tail.values, tail.collisions, grid=(0.05, 1.0, 2.0))
    assert res.points[0].status == "skipped" and res.points[0].reason.startswith("sample_size")
    assert res.points[1].ok and res.points[1].family in ("gev", "gumbel")


def test_normalized_variant_and_determinism(tmp_path, tail):
    a = sweep_pot(tail.values, tail.collisions, variant="normalized", seed=1)
    b = sweep_pot(tail.values, tail.collisions, variant="normalized", seed=1, threads=2)
    assert a.rows() == b.rows()
    a.write_csv(tmp_path / "a.csv")
    b.write_csv(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    # the shift moves every excess equally, so the GPD fits coincide
    c = sweep_pot(tail.values, tail.collisions, seed=1)
    for p, q in zip(a.successful(), c.successful()):
        assert p.xi == pytest.approx(q.xi, abs=1e-6)


def test_errors(tail):
    with pytest.raises(SweepError):
        sweep_pot(tail.values, tail.collisions, grid=(0.01, 0.02))
    with pytest.raises(ValueError):
        sweep_pot(tail.values, tail.collisions, grid=(1.0, 0.5))
    with pytest.raises(ValueError):
        sweep_bm(tail.values, tail.collisions, variant="raw")
    with pytest.raises(ValueError):
        sweep_bm(np.array([1.0, -2.0]), 0)


def test_positive_shape_warning():
    from evtss.sweep import _finish

    pts = _result([-0.1, 0.4, 0.45]).points
    res = _finish("bm", "original", list(pts), 0)
    assert len(res.warnings) == 1 and "0.7" in res.warnings[0]
