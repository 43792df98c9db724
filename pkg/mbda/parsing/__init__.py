"""Raw logs to per-interval feature counts."""

from mbda.parsing.parser import (
    FeatureStream,
    ParseStats,
    count_features,
    extract_timestamp,
    merge_streams,
    parse_files,
    parse_source,
)
from mbda.parsing.reader import LogLine

__all__ = [
    "FeatureStream",
    "LogLine",
    "ParseStats",
    "count_features",
    "extract_timestamp",
    "merge_streams",
    "parse_files",
    "parse_source",
]
