"""
Bring every source to the common sampling rate and append their feature columns.

- Only downsampling: fine intervals are summed into each coarse interval.
- Missing source intervals are zero (no events observed).
- Column order is source order, then feature declaration order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator, Sequence

import numpy as np
import structlog

from mbda.constants import DEFAULT_CHUNK_ROWS
from mbda.errors import ConfigError, DataError
from mbda.parsing.parser import FeatureStream
from mbda.parsing.streams import iter_counts_csv, read_counts_csv, read_counts_header, write_counts_csv

logger = structlog.get_logger(__name__)


@dataclass(frozen=True, eq=False)
class FusedMatrix:
    """N x M observation matrix on a regular common-interval grid."""

    timestamps: np.ndarray
    feature_names: tuple[str, ...]
    counts: np.ndarray = field(repr=False)
    interval_seconds: int

    def __post_init__(self) -> None:
        ts = np.asarray(self.timestamps, dtype=np.int64).reshape(-1)
        counts = np.asarray(self.counts, dtype=np.int64).reshape(len(ts), len(self.feature_names))
        if len(ts) > 1 and not np.all(np.diff(ts) == self.interval_seconds):
            raise DataError(f"timestamps are not regular at {self.interval_seconds} s")
        if len(set(self.feature_names)) != len(self.feature_names):
            raise ConfigError("duplicate qualified feature names in fused matrix")
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "counts", counts)

    @property
    def shape(self) -> tuple[int, int]:
        return self.counts.shape  # type: ignore[return-value]

    def select_rows(self, keep: np.ndarray) -> np.ndarray:
        """Counts of the rows where keep is true (used for Phase I exclusion refits)."""
        return self.counts[np.asarray(keep, dtype=bool)]

    def rows_between(self, start: int, end: int) -> np.ndarray:
        """Boolean mask of rows with start <= timestamp <= end."""
        return (self.timestamps >= start) & (self.timestamps <= end)


def resample(stream: FeatureStream, common_interval: int) -> FeatureStream:
    """
    Sum the k fine intervals of each coarse interval; starts re-anchored to the coarse grid.

    Raises:
        ConfigError: common_interval is not a multiple of the stream interval.
    """
    if common_interval % stream.interval_seconds != 0:
        raise ConfigError(
            f"source {stream.source!r}: common interval not an integer multiple "
            f"({common_interval} s vs {stream.interval_seconds} s)"
        )
    if common_interval == stream.interval_seconds:
        return stream
    m = len(stream.feature_names)
    if len(stream) == 0:
        return FeatureStream(stream.source, common_interval, stream.feature_names, stream.starts, stream.counts)
    coarse = stream.starts - stream.starts % common_interval
    first = int(coarse.min())
    n = (int(coarse.max()) - first) // common_interval + 1
    counts = np.zeros((n, m), dtype=np.int64)
    np.add.at(counts, (coarse - first) // common_interval, stream.counts)
    starts = first + common_interval * np.arange(n, dtype=np.int64)
    return FeatureStream(stream.source, common_interval, stream.feature_names, starts, counts)


def fuse(streams: Sequence[FeatureStream]) -> FusedMatrix:
    """
    Append the feature columns of streams already at the common rate.

    Rows span the union of all streams' intervals; a source absent at a timestamp
    contributes a zero sub-vector.
    """
    if not streams:
        raise DataError("no streams to fuse")
    interval = streams[0].interval_seconds
    for s in streams:
        if s.interval_seconds != interval:
            raise ConfigError(f"source {s.source!r} is at {s.interval_seconds} s, expected common {interval} s")
    names = tuple(f"{s.source}.{f}" for s in streams for f in s.feature_names)
    if len(set(names)) != len(names):
        raise ConfigError("duplicate qualified feature names across sources")
    present = [s for s in streams if len(s)]
    if not present:
        return FusedMatrix(np.zeros(0, np.int64), names, np.zeros((0, len(names)), np.int64), interval)
    first = min(int(s.starts.min()) for s in present)
    last = max(int(s.starts.max()) for s in present)
    timestamps = np.arange(first, last + interval, interval, dtype=np.int64)
    counts = np.zeros((len(timestamps), len(names)), dtype=np.int64)
    col = 0
    for s in streams:
        m = len(s.feature_names)
        if len(s):
            counts[(s.starts - first) // interval, col:col + m] = s.counts
        col += m
    logger.info("fuse_done", rows=len(timestamps), features=len(names), sources=len(streams))
    return FusedMatrix(timestamps, names, counts, interval)


def write_fused(matrix: FusedMatrix, path: str | Path) -> None:
    write_counts_csv(path, matrix.timestamps, list(matrix.feature_names), matrix.counts)


def read_fused(path: str | Path, interval_seconds: int, expected_names: Sequence[str] | None = None) -> FusedMatrix:
    """Read a fused observation file; when expected_names is given the header must match it."""
    timestamps, columns, counts = read_counts_csv(path)
    if expected_names is not None and list(expected_names) != columns:
        raise ConfigError(f"{path}: fused header does not match the configured features")
    return FusedMatrix(timestamps, tuple(columns), counts, interval_seconds)


@dataclass(frozen=True)
class FusedFile:
    """
    A fused observation file read block by block.

    Each call to chunks() is a fresh pass over the file and holds at most chunk_rows rows,
    so callers make as many passes as they need instead of loading the matrix.
    """

    path: Path
    feature_names: tuple[str, ...]
    interval_seconds: int
    chunk_rows: int = DEFAULT_CHUNK_ROWS

    def chunks(self) -> Iterator[FusedMatrix]:
        """Consecutive row blocks; the grid must stay regular across block boundaries."""
        last: int | None = None
        for starts, columns, counts in iter_counts_csv(self.path, self.chunk_rows):
            if tuple(columns) != self.feature_names:
                raise DataError(f"{self.path}: header changed while reading")
            if len(starts) == 0:
                continue
            if last is not None and int(starts[0]) - last != self.interval_seconds:
                raise DataError(f"{self.path}: timestamps are not regular at {self.interval_seconds} s")
            last = int(starts[-1])
            yield FusedMatrix(starts, self.feature_names, counts, self.interval_seconds)

    def counts(self, keep: Callable[[np.ndarray], np.ndarray] | None = None) -> Iterator[np.ndarray]:
        """Count blocks of one pass; keep maps a block's timestamps to the mask of rows to retain."""
        for chunk in self.chunks():
            yield chunk.counts if keep is None else chunk.select_rows(keep(chunk.timestamps))

    def window(self, start: int, end: int) -> FusedMatrix:
        """The rows with start <= timestamp <= end, gathered without reading past end."""
        timestamps: list[np.ndarray] = []
        blocks: list[np.ndarray] = []
        for chunk in self.chunks():
            if chunk.timestamps[0] > end:
                break
            mask = chunk.rows_between(start, end)
            timestamps.append(chunk.timestamps[mask])
            blocks.append(chunk.counts[mask])
        m = len(self.feature_names)
        return FusedMatrix(
            np.concatenate(timestamps) if timestamps else np.zeros(0, np.int64),
            self.feature_names,
            np.concatenate(blocks) if blocks else np.zeros((0, m), np.int64),
            self.interval_seconds,
        )


def open_fused(
    path: str | Path,
    interval_seconds: int,
    expected_names: Sequence[str] | None = None,
    chunk_rows: int = DEFAULT_CHUNK_ROWS,
) -> FusedFile:
    """Check the header of a fused file and return a block reader over it; no rows are read yet."""
    columns = read_counts_header(path)
    if expected_names is not None and list(expected_names) != columns:
        raise ConfigError(f"{path}: fused header does not match the configured features")
    return FusedFile(Path(path), tuple(columns), interval_seconds, chunk_rows)
