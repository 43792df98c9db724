"""Tests for anomaly triage and the JSON-lines report."""

import json
import random

import pytest

from mbda.errors import DataError
from mbda.monitor.statistics import MonitorRecord
from mbda.monitor.triage import read_anomalies, triage, write_anomalies


def rec(i, t):
    return MonitorRecord(timestamp=60 * i, d=0.0, q=0.0, tscore=t)


def test_ranked_by_tscore_descending():
    records = [rec(0, 0.5), rec(1, 3.0), rec(2, 0.2), rec(3, 2.0)]
    out = triage(records, 3, 60, coalesce=False)
    assert [w.start for w in out] == [60, 180, 0]
    assert [w.rank for w in out] == [1, 2, 3]
    assert out[0].tscore_max == 3.0


def test_ties_go_to_earlier_timestamp():
    records = [rec(i, 1.0) for i in range(10)]
    random.Random(1).shuffle(records)
    out = triage(records, 4, 60, coalesce=False)
    assert [w.start for w in out] == [0, 60, 120, 180]


def test_ties_with_default_coalescing():
    below = [rec(i, 1.0) for i in range(10)]
    assert [w.start for w in triage(below, 3, 60)] == [0, 60, 120]
    above = [rec(i, 2.0) for i in range(10)]
    [window] = triage(above, 3, 60)
    assert (window.start, window.end, window.n_intervals) == (0, 540, 10)
    assert window.tscore_max == 2.0


def test_permutation_of_input_and_order_invariant():
    records = [rec(i, float((i * 7) % 11)) for i in range(30)]
    shuffled = records[:]
    random.Random(2).shuffle(shuffled)
    a = triage(records, 100, 60, coalesce=False)
    b = triage(shuffled, 100, 60, coalesce=False)
    assert a == b
    assert sorted(w.start for w in a) == [r.timestamp for r in records]


def test_consecutive_anomalous_intervals_coalesce():
    # 04:10 to 04:14 above the limit
    records = [rec(i, 0.3) for i in range(250, 260)] + [rec(i, 5.0 + i % 3) for i in range(260, 265)]
    records += [rec(i, 0.4) for i in range(265, 270)]
    out = triage(records, 2, 60)
    assert out[0].start == 260 * 60
    assert out[0].end == 264 * 60
    assert out[0].n_intervals == 5
    assert out[0].tscore_max == 7.0
    assert out[1].n_intervals == 1
    assert out[1].tscore_max == 0.4


def test_gap_splits_windows():
    records = [rec(0, 5.0), rec(1, 4.0), rec(2, 0.1), rec(3, 6.0)]
    out = triage(records, 5, 60)
    assert [(w.start, w.end) for w in out] == [(180, 180), (0, 60), (120, 120)]


def test_top_k_validation():
    with pytest.raises(DataError):
        triage([rec(0, 1.0)], 0, 60)


def test_report_round_trip(tmp_path):
    records = [rec(0, 5.0), rec(1, 4.0), rec(2, 0.1)]
    out = triage(records, 5, 60)
    path = tmp_path / "anomalies.jsonl"
    write_anomalies(out, path)
    first = json.loads(path.read_text().splitlines()[0])
    assert first == {"window_start": "1970-01-01T00:00:00Z", "window_end": "1970-01-01T00:01:00Z",
                     "tscore_max": 5.0, "rank": 1}
    assert read_anomalies(path, 60) == out


def test_read_anomalies_malformed(tmp_path):
    path = tmp_path / "a.jsonl"
    path.write_text('{"rank": 1}\n')
    with pytest.raises(DataError, match="malformed"):
        read_anomalies(path, 60)
