"""FeatureStream CSV files: header `timestamp,<source.feature>,...`, ISO-8601 UTC, integer cells."""

from __future__ import annotations

from pathlib import Path
from typing import Iterator

import numpy as np
import pandas as pd

from mbda.config.schemas import SourceSpec
from mbda.constants import TIMESTAMP_COLUMN
from mbda.errors import ConfigError, DataError
from mbda.parsing.parser import FeatureStream
from mbda.timestamps import format_instant, parse_instant


def write_counts_csv(path: str | Path, starts: np.ndarray, columns: list[str], counts: np.ndarray) -> None:
    """Shared writer for stream and fused files."""
    df = pd.DataFrame(np.asarray(counts, dtype=np.int64).reshape(len(starts), len(columns)), columns=columns)
    df.insert(0, TIMESTAMP_COLUMN, [format_instant(t) for t in np.asarray(starts).tolist()])
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, lineterminator="\n")


def _check_header(df: pd.DataFrame, path: str | Path) -> list[str]:
    if not len(df.columns) or df.columns[0] != TIMESTAMP_COLUMN:
        raise DataError(f"{path}: first column must be {TIMESTAMP_COLUMN!r}")
    return [str(c) for c in df.columns[1:]]


def _frame_counts(df: pd.DataFrame, path: str | Path) -> tuple[np.ndarray, list[str], np.ndarray]:
    columns = _check_header(df, path)
    starts = np.asarray([parse_instant(t) for t in df[TIMESTAMP_COLUMN]], dtype=np.int64)
    if len(df) == 0:
        return starts, columns, np.zeros((0, len(columns)), np.int64)
    for c in columns:
        if not pd.api.types.is_integer_dtype(df[c]):
            raise DataError(f"{path}: column {c!r} must hold integers")
    counts = df[columns].to_numpy(dtype=np.int64)
    if np.any(counts < 0):
        raise DataError(f"{path}: count cells must be nonnegative")
    return starts, columns, counts


def read_counts_header(path: str | Path) -> list[str]:
    """Count column names of a counts file, without reading its rows."""
    try:
        df = pd.read_csv(path, dtype={TIMESTAMP_COLUMN: str}, nrows=0)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DataError(f"cannot read counts file {path}: {e}") from e
    return _check_header(df, path)


def read_counts_csv(path: str | Path) -> tuple[np.ndarray, list[str], np.ndarray]:
    """Return (starts, column names, counts); rejects non-integer or negative cells."""
    try:
        df = pd.read_csv(path, dtype={TIMESTAMP_COLUMN: str})
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DataError(f"cannot read counts file {path}: {e}") from e
    return _frame_counts(df, path)


def iter_counts_csv(path: str | Path, chunk_rows: int) -> Iterator[tuple[np.ndarray, list[str], np.ndarray]]:
    """read_counts_csv in blocks of at most chunk_rows rows, each validated the same way."""
    if chunk_rows < 1:
        raise DataError("chunk_rows must be >= 1")
    try:
        reader = pd.read_csv(path, dtype={TIMESTAMP_COLUMN: str}, chunksize=chunk_rows)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DataError(f"cannot read counts file {path}: {e}") from e
    with reader:
        try:
            for df in reader:
                yield _frame_counts(df, path)
        except pd.errors.ParserError as e:
            raise DataError(f"cannot read counts file {path}: {e}") from e


def write_stream(stream: FeatureStream, path: str | Path) -> None:
    write_counts_csv(path, stream.starts, [f"{stream.source}.{n}" for n in stream.feature_names], stream.counts)


def read_stream(path: str | Path, spec: SourceSpec) -> FeatureStream:
    """Read a stream file written for spec; the header must match the configured features."""
    starts, columns, counts = read_counts_csv(path)
    expected = [f"{spec.name}.{n}" for n in spec.feature_names]
    if columns != expected:
        raise ConfigError(f"{path}: header does not match source {spec.name!r} in the config")
    return FeatureStream(spec.name, spec.interval_seconds, tuple(spec.feature_names), starts, counts)
