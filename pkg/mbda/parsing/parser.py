"""
Feature-as-a-counter parsing: bucket raw lines into sampling intervals and count regex matches.

- Intervals are epoch-aligned: floor(timestamp / interval) * interval.
- Counting is per occurrence: every non-overlapping match in a line counts.
- Lines whose timestamp cannot be extracted are skipped and counted in ParseStats.
- Per-chunk results merge associatively (element-wise addition on interval keys), so any
  line-aligned partition of the input, or any worker count, gives the same FeatureStream.
"""

from __future__ import annotations

import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import structlog

from mbda.config.schemas import SourceSpec
from mbda.errors import ConfigError, DataError
from mbda.parsing.reader import LogLine, iter_lines, plan_chunks
from mbda.timestamps import floor_to, to_epoch

logger = structlog.get_logger(__name__)


@dataclass(frozen=True)
class ParseStats:
    """Audit trail of one parse."""

    lines_read: int = 0
    lines_unparseable: int = 0
    intervals: int = 0


@dataclass(frozen=True, eq=False)
class FeatureStream:
    """Per-interval count vectors of one source.

    starts are epoch seconds (strictly increasing, multiples of interval_seconds);
    counts is len(starts) x len(feature_names), nonnegative integers.
    """

    source: str
    interval_seconds: int
    feature_names: tuple[str, ...]
    starts: np.ndarray
    counts: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        starts = np.asarray(self.starts, dtype=np.int64).reshape(-1)
        counts = np.asarray(self.counts, dtype=np.int64).reshape(len(starts), len(self.feature_names))
        if len(starts) > 1 and not np.all(np.diff(starts) > 0):
            raise DataError(f"source {self.source!r}: interval starts must be strictly increasing")
        if np.any(starts % self.interval_seconds != 0):
            raise DataError(f"source {self.source!r}: interval starts not aligned to {self.interval_seconds} s")
        if np.any(counts < 0):
            raise DataError(f"source {self.source!r}: negative counts")
        object.__setattr__(self, "starts", starts)
        object.__setattr__(self, "counts", counts)

    @classmethod
    def from_rows(
        cls,
        source: str,
        interval_seconds: int,
        feature_names: Sequence[str],
        rows: Iterable[tuple[int, Sequence[int]]],
    ) -> FeatureStream:
        """Build from (interval_start, counts) rows in any order; duplicate starts add up."""
        buckets: dict[int, np.ndarray] = {}
        m = len(feature_names)
        for start, vec in rows:
            acc = buckets.setdefault(int(start), np.zeros(m, dtype=np.int64))
            acc += np.asarray(vec, dtype=np.int64)
        return _densify(source, interval_seconds, tuple(feature_names), buckets)

    def __len__(self) -> int:
        return len(self.starts)

    def equals(self, other: FeatureStream) -> bool:
        return (
            self.source == other.source
            and self.interval_seconds == other.interval_seconds
            and self.feature_names == other.feature_names
            and np.array_equal(self.starts, other.starts)
            and np.array_equal(self.counts, other.counts)
        )


def _densify(
    source: str,
    interval: int,
    feature_names: tuple[str, ...],
    buckets: dict[int, np.ndarray] | dict[int, list[int]],
) -> FeatureStream:
    """Sorted, zero-filled between first and last observed interval."""
    m = len(feature_names)
    if not buckets:
        return FeatureStream(source, interval, feature_names, np.zeros(0, np.int64), np.zeros((0, m), np.int64))
    first, last = min(buckets), max(buckets)
    starts = np.arange(first, last + interval, interval, dtype=np.int64)
    counts = np.zeros((len(starts), m), dtype=np.int64)
    for start, vec in buckets.items():
        counts[(start - first) // interval] += np.asarray(vec, dtype=np.int64)
    return FeatureStream(source, interval, feature_names, starts, counts)


def try_timestamp(line: str, spec: SourceSpec) -> datetime | None:
    m = spec.timestamp_regex.search(line)
    if m is None:
        return None
    try:
        dt = datetime.strptime(m.group(1), spec.timestamp_format)
    except ValueError:
        return None
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=spec.tzinfo)
    return dt


def extract_timestamp(line: str, spec: SourceSpec) -> datetime:
    """
    Instant of a raw line, from the first timestamp_pattern match parsed with timestamp_format.

    Raises:
        DataError: No match, or the captured text does not fit the format.
    """
    dt = try_timestamp(line, spec)
    if dt is None:
        raise DataError(f"source {spec.name!r}: unparseable timestamp in line {line[:80]!r}")
    return dt


def count_features(lines: Iterable[str | LogLine], spec: SourceSpec) -> np.ndarray:
    """Total non-overlapping matches of each feature over the given lines (zero vector when empty)."""
    regexes = [f.regex for f in spec.features]
    totals = [0] * len(regexes)
    for line in lines:
        raw = line.raw if isinstance(line, LogLine) else line
        for j, rx in enumerate(regexes):
            totals[j] += len(rx.findall(raw))
    return np.asarray(totals, dtype=np.int64)


# Escapes that cannot match a line break; \b and \B see "\n" as a non-word character,
# the same as the ends of a single line.
_LINE_LOCAL_ESCAPES = frozenset("dwbB123456789")
_REGEX_META = frozenset(".^$*+?{}[]\\|()")
_BLOCK_LINES = 4096


def is_line_local(pattern: str) -> bool:
    """
    True when no match of pattern can touch a line break.

    Such a pattern finds the same matches in newline-joined lines as in each line alone.
    Anchors, inline flags, lookarounds, negated classes and control characters all disqualify.
    """
    if "(?" in pattern or "[^" in pattern or any(ord(ch) < 0x20 for ch in pattern):
        return False
    i = 0
    while i < len(pattern):
        ch = pattern[i]
        if ch in "^$":
            return False
        if ch == "\\":
            nxt = pattern[i + 1 : i + 2]
            if nxt.isalnum() and nxt not in _LINE_LOCAL_ESCAPES:
                return False
            i += 2
            continue
        i += 1
    return True


def leading_literal(pattern: str) -> str:
    """Text every match of pattern starts with; empty when there is none to rely on."""
    if "|" in pattern:
        return ""
    i = 0
    while i < len(pattern) and pattern[i] not in _REGEX_META:
        i += 1
    lead = pattern[:i]
    if i < len(pattern) and pattern[i] in "*?{":
        lead = lead[:-1]
    return lead


@dataclass(frozen=True, slots=True)
class _BlockCounter:
    """One line-local feature, counted over a block of joined lines at a time."""

    column: int
    regex: re.Pattern[str]
    lead: str
    literal: bool

    def count(self, text: str) -> int:
        if self.literal:
            return text.count(self.lead)
        if self.lead and self.lead not in text:
            return 0
        return len(self.regex.findall(text))


def _split_counters(spec: SourceSpec) -> tuple[list[_BlockCounter], list[tuple[int, re.Pattern[str]]]]:
    block: list[_BlockCounter] = []
    per_line: list[tuple[int, re.Pattern[str]]] = []
    for j, f in enumerate(spec.features):
        if not is_line_local(f.pattern):
            per_line.append((j, f.regex))
            continue
        lead = leading_literal(f.pattern)
        block.append(_BlockCounter(j, f.regex, lead, literal=bool(lead) and lead == f.pattern))
    return block, per_line


def _count_block(lines: list[str], acc: list[int], counters: Sequence[_BlockCounter]) -> None:
    text = "\n".join(lines)
    for c in counters:
        n = c.count(text)
        if n:
            acc[c.column] += n


def parse_source(lines: Iterable[str], spec: SourceSpec) -> tuple[FeatureStream, ParseStats]:
    """
    Parse one line stream of one source into a FeatureStream.

    Every parseable line lands in its epoch-aligned interval; interior empty intervals
    are emitted as zero rows. Line-local features are counted once per block of
    consecutive lines sharing an interval, the rest line by line.
    """
    block, per_line = _split_counters(spec)
    m = len(spec.features)
    interval = spec.interval_seconds
    buckets: dict[int, list[int]] = {}
    read = unparseable = 0
    pending: list[str] = []
    pending_acc: list[int] = []
    # Consecutive lines usually share a timestamp string; skip strptime for repeats
    last_text: str | None = None
    last_start = 0
    ts_rx = spec.timestamp_regex
    for line in lines:
        read += 1
        tm = ts_rx.search(line)
        if tm is None:
            unparseable += 1
            continue
        text = tm.group(1)
        if text != last_text:
            dt = try_timestamp(line, spec)
            if dt is None:
                unparseable += 1
                continue
            last_text, last_start = text, floor_to(to_epoch(dt), interval)
        acc = buckets.get(last_start)
        if acc is None:
            acc = buckets[last_start] = [0] * m
        if block:
            if acc is not pending_acc or len(pending) >= _BLOCK_LINES:
                if pending:
                    _count_block(pending, pending_acc, block)
                pending, pending_acc = [], acc
            pending.append(line)
        for j, rx in per_line:
            n = len(rx.findall(line))
            if n:
                acc[j] += n
    if pending:
        _count_block(pending, pending_acc, block)
    stream = _densify(spec.name, interval, tuple(spec.feature_names), buckets)
    return stream, ParseStats(lines_read=read, lines_unparseable=unparseable, intervals=len(stream))


def merge_streams(streams: Sequence[FeatureStream]) -> FeatureStream:
    """Element-wise sum on interval keys, zero-filled between the global first and last interval."""
    if not streams:
        raise DataError("nothing to merge")
    head = streams[0]
    for s in streams[1:]:
        if (s.source, s.interval_seconds, s.feature_names) != (head.source, head.interval_seconds, head.feature_names):
            raise DataError(f"cannot merge streams of different shape: {head.source!r} vs {s.source!r}")
    buckets: dict[int, np.ndarray] = {}
    m = len(head.feature_names)
    for s in streams:
        for start, vec in zip(s.starts.tolist(), s.counts):
            acc = buckets.setdefault(start, np.zeros(m, dtype=np.int64))
            acc += vec
    return _densify(head.source, head.interval_seconds, head.feature_names, buckets)


def _parse_range(path: str, spec: SourceSpec, start: int, end: int | None) -> tuple[FeatureStream, ParseStats]:
    return parse_source((raw for _, raw in iter_lines(path, spec.encoding, start, end)), spec)


def parse_files(
    paths: Sequence[str | Path],
    spec: SourceSpec,
    workers: int = 1,
) -> tuple[FeatureStream, ParseStats]:
    """
    Parse all input files of one source, optionally in a process pool.

    Each file is cut into line-aligned byte ranges (one per worker); per-range streams are
    merged, so the result does not depend on the worker count.

    Raises:
        DataError: An input cannot be read (the message names it).
    """
    if not paths:
        raise ConfigError(f"source {spec.name!r}: no input files")
    jobs: list[tuple[str, int, int | None]] = []
    for p in paths:
        for start, end in plan_chunks(p, workers):
            jobs.append((str(p), start, end))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_parse_range, path, spec, start, end) for path, start, end in jobs]
            results = [f.result() for f in futures]
    else:
        results = [_parse_range(path, spec, start, end) for path, start, end in jobs]
    stream = merge_streams([r[0] for r in results])
    stats = ParseStats(
        lines_read=sum(r[1].lines_read for r in results),
        lines_unparseable=sum(r[1].lines_unparseable for r in results),
        intervals=len(stream),
    )
    if stats.lines_unparseable:
        logger.warning("unparseable_lines", source=spec.name, count=stats.lines_unparseable, read=stats.lines_read)
    logger.info("parse_done", source=spec.name, files=len(paths), lines=stats.lines_read, intervals=stats.intervals)
    return stream, stats
