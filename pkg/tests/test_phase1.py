"""Tests for the Phase I variance comparison and exclusion files."""

import json

import numpy as np
import pytest

from mbda.config.schemas import ComponentPolicy
from mbda.errors import DataError
from mbda.monitor.phase1 import exclusion_mask, phase1_variance_check, read_exclusions, write_report
from mbda.pca.core import calibrate
from mbda.timestamps import parse_instant

POLICY = ComponentPolicy(fixed=2)


def background(seed=0, n=400, m=6):
    return np.random.default_rng(seed).poisson(5.0, size=(n, m))


def test_identical_models_no_change():
    model = calibrate(background(), POLICY)
    report = phase1_variance_check(model, model)
    assert report.max_relative_change == 0.0
    assert report.polluted is False
    assert len(report.fractions_full) == 2


def test_empty_exclusion_is_identity():
    x = background(seed=1)
    keep = exclusion_mask(np.arange(len(x)) * 60, [])
    assert keep.all()
    report = phase1_variance_check(calibrate(x, POLICY), calibrate(x[keep], POLICY))
    assert report.max_relative_change == pytest.approx(0.0, abs=1e-12)
    assert not report.polluted


def test_planted_outliers_flagged():
    x = background(seed=2).astype(float)
    # a handful of rows with a huge joint excursion dominate PC 1
    x[:4, :4] += 200.0
    full = calibrate(x, POLICY)
    reduced = calibrate(x[4:], POLICY)
    report = phase1_variance_check(full, reduced, threshold=0.10)
    assert full.variance_fractions[0] > 2 * reduced.variance_fractions[0]
    assert report.polluted
    assert report.max_relative_change > 0.10
    dense = np.linalg.eigvalsh(np.cov(((x - x.mean(0)) / x.std(0, ddof=1)).T))[::-1]
    assert report.fractions_full[0] == pytest.approx(dense[0] / dense.sum(), rel=1e-8)


def test_mismatched_features():
    a = calibrate(background(m=6), POLICY)
    b = calibrate(background(m=5), POLICY)
    with pytest.raises(DataError, match="feature count"):
        phase1_variance_check(a, b)


def test_read_exclusions(tmp_path):
    p = tmp_path / "exclude.txt"
    p.write_text("# inspected outliers\n2012-04-05T00:01:00Z\n\n2012-04-05T00:03:00Z 2012-04-05T00:04:00Z  # burst\n")
    ranges = read_exclusions(p)
    t = parse_instant("2012-04-05T00:00:00Z")
    assert ranges == [(t + 60, t + 60), (t + 180, t + 240)]
    keep = exclusion_mask(t + 60 * np.arange(6), ranges)
    assert keep.tolist() == [True, False, True, False, False, True]


def test_read_exclusions_errors(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("2012-04-05T00:04:00Z 2012-04-05T00:03:00Z\n")
    with pytest.raises(DataError, match="ends before"):
        read_exclusions(p)
    with pytest.raises(DataError):
        read_exclusions(tmp_path / "missing.txt")


def test_write_report(tmp_path):
    model = calibrate(background(), POLICY)
    write_report(phase1_variance_check(model, model), tmp_path / "phase1_check.json")
    doc = json.loads((tmp_path / "phase1_check.json").read_text())
    assert doc["polluted"] is False
    assert doc["threshold"] == 0.10
    assert doc["n_full"] == doc["n_reduced"] == 400
