"""
Anomaly triage: rank intervals (or runs of intervals) by Tscore.

With coalescing on, maximal runs of consecutive intervals whose Tscore exceeds the coalesce
threshold become one window scored by its peak; every other interval is a window of its own.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from mbda.errors import DataError
from mbda.monitor.statistics import MonitorRecord
from mbda.timestamps import format_instant, parse_instant


@dataclass(frozen=True, slots=True)
class AnomalyWindow:
    rank: int
    start: int
    end: int
    tscore_max: float
    n_intervals: int = 1

    def as_json(self) -> dict[str, object]:
        return {
            "window_start": format_instant(self.start),
            "window_end": format_instant(self.end),
            "tscore_max": self.tscore_max,
            "rank": self.rank,
        }


def _windows(records: list[MonitorRecord], interval: int, coalesce: bool, threshold: float) -> list[AnomalyWindow]:
    out: list[AnomalyWindow] = []
    run: list[MonitorRecord] = []

    def close() -> None:
        if run:
            out.append(AnomalyWindow(0, run[0].timestamp, run[-1].timestamp, max(r.tscore for r in run), len(run)))
            run.clear()

    for rec in records:
        if coalesce and rec.tscore > threshold:
            if run and rec.timestamp - run[-1].timestamp != interval:
                close()
            run.append(rec)
            continue
        close()
        out.append(AnomalyWindow(0, rec.timestamp, rec.timestamp, rec.tscore))
    close()
    return out


def triage(
    records: Sequence[MonitorRecord],
    top_k: int,
    interval_seconds: int,
    coalesce: bool = True,
    threshold: float = 1.0,
) -> list[AnomalyWindow]:
    """
    Top-k windows by peak Tscore, descending; ties go to the earlier window start.

    Equal Tscores therefore yield the first top_k timestamps only while they are not merged:
    with coalescing off, or at or below the threshold. Consecutive equal Tscores above the
    threshold form a single window. The result does not depend on the order of records.
    """
    if top_k < 1:
        raise DataError(f"top_k must be >= 1, got {top_k}")
    ordered = sorted(records, key=lambda r: r.timestamp)
    windows = _windows(ordered, interval_seconds, coalesce, threshold)
    windows.sort(key=lambda w: (-w.tscore_max, w.start))
    return [
        AnomalyWindow(rank, w.start, w.end, w.tscore_max, w.n_intervals)
        for rank, w in enumerate(windows[:top_k], start=1)
    ]


def write_anomalies(windows: Sequence[AnomalyWindow], path: str | Path) -> None:
    """One JSON object per line: window_start, window_end, tscore_max, rank."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for w in windows:
            fh.write(json.dumps(w.as_json()) + "\n")


def read_anomalies(path: str | Path, interval_seconds: int) -> list[AnomalyWindow]:
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise DataError(f"cannot read anomaly report {path}: {e}") from e
    out = []
    for i, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            start = parse_instant(obj["window_start"])
            end = parse_instant(obj["window_end"])
            out.append(AnomalyWindow(int(obj["rank"]), start, end, float(obj["tscore_max"]),
                                     (end - start) // interval_seconds + 1))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            raise DataError(f"{path}:{i}: malformed anomaly record: {e}") from e
    return out
