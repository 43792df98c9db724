"""Tests for the compressed D-vs-Q chart data."""

import numpy as np
import pytest

from mbda.errors import DataError
from mbda.monitor.clustering import cluster_plot, write_cluster_plot
from mbda.monitor.statistics import ControlLimits, MonitorRecord

LIMITS = ControlLimits(ucl_d=2.0, ucl_q=4.0, percentile=0.99, n_calibration=10)


def records(points):
    return [MonitorRecord(60 * i, d, q, 0.0) for i, (d, q) in enumerate(points)]


def test_few_records_one_cluster_each():
    recs = records([(1.0, 1.0), (2.0, 4.0), (0.5, 8.0)])
    out = cluster_plot(recs, LIMITS, max_clusters=10)
    assert [p.multiplicity for p in out] == [1, 1, 1]
    assert (out[1].centroid_d, out[1].centroid_q) == (1.0, 1.0)
    assert out[2].members == (120,)


def test_identical_points_single_cluster():
    recs = records([(3.0, 3.0)] * 50)
    out = cluster_plot(recs, LIMITS, max_clusters=5, member_cap=100)
    assert len(out) == 1
    assert out[0].multiplicity == 50
    assert out[0].members == tuple(60 * i for i in range(50))


def test_members_dropped_above_cap():
    out = cluster_plot(records([(3.0, 3.0)] * 3), LIMITS, max_clusters=5, member_cap=1)
    assert out[0].multiplicity == 3
    assert out[0].members is None


def test_nearest_pair_merges_weighted():
    recs = records([(0.0, 0.0), (20.0, 0.0), (2.0, 0.0)])
    out = cluster_plot(recs, LIMITS, max_clusters=2)
    assert sorted(p.multiplicity for p in out) == [1, 2]
    merged = next(p for p in out if p.multiplicity == 2)
    assert merged.centroid_d == pytest.approx(0.5)
    assert merged.centroid_q == 0.0


def test_mass_conserved_and_bounded():
    rng = np.random.default_rng(0)
    recs = records(rng.exponential(size=(3000, 2)).tolist())
    out = cluster_plot(recs, LIMITS, max_clusters=100)
    assert len(out) == 100
    assert sum(p.multiplicity for p in out) == 3000


def test_deterministic():
    rng = np.random.default_rng(1)
    recs = records(rng.exponential(size=(500, 2)).tolist())
    assert cluster_plot(recs, LIMITS, 20) == cluster_plot(recs, LIMITS, 20)


def test_max_clusters_validation():
    with pytest.raises(DataError):
        cluster_plot([], LIMITS, 0)
    assert cluster_plot([], LIMITS, 3) == []


def test_write_cluster_plot(tmp_path):
    out = cluster_plot(records([(1.0, 1.0), (1.0, 1.0), (4.0, 4.0)]), LIMITS, 10)
    write_cluster_plot(out, tmp_path / "c.csv")
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "centroid_d,centroid_q,multiplicity,members"
    assert lines[1] == "0.5,0.25,2,"
    assert lines[2] == "2.0,1.0,1,1970-01-01T00:02:00Z"
