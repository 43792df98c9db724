"""
De-parsing: recover the raw lines of an anomaly window, ranked by how many of the
diagnosed features (F) they match.

Per source, lines are taken one fscore level at a time starting from |F_source|; a level is always
taken whole, and extraction stops once the threshold is reached or the level hits 0.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import structlog

from mbda.config.schemas import FeatureSpec, PipelineConfig, SourceSpec
from mbda.diagnosis.contributions import SelectedFeatures
from mbda.errors import DataError
from mbda.parsing.parser import try_timestamp
from mbda.parsing.reader import LogLine, encode_raw, iter_lines
from mbda.timestamps import format_instant, to_epoch

logger = structlog.get_logger(__name__)


@dataclass(frozen=True, slots=True)
class ScoredLine:
    line: LogLine
    fscore: int
    signature: tuple[str, ...]


@dataclass
class SourceDeparse:
    source: str
    features: list[str]
    lines: list[ScoredLine] = field(default_factory=list)
    lines_in_window: int = 0

    @property
    def lines_per_level(self) -> dict[int, int]:
        counts = Counter(s.fscore for s in self.lines)
        return {level: counts[level] for level in sorted(counts, reverse=True)}

    @property
    def signatures(self) -> dict[str, int]:
        counts = Counter("+".join(s.signature) for s in self.lines)
        return dict(sorted(counts.items(), key=lambda kv: (-kv[1], kv[0])))


@dataclass
class DeparseResult:
    start: int
    end: int
    sources: list[SourceDeparse]
    notice: str | None = None

    @property
    def retrieved(self) -> int:
        return sum(len(s.lines) for s in self.sources)


def features_by_source(selected: SelectedFeatures, config: PipelineConfig) -> dict[str, list[FeatureSpec]]:
    """Split F into each source's FeatureSpecs, keeping F's order."""
    lookup = {f"{s.name}.{f.name}": (s.name, f) for s in config.sources for f in s.features}
    out: dict[str, list[FeatureSpec]] = {s.name: [] for s in config.sources}
    for name in selected.names:
        if name not in lookup:
            raise DataError(f"selected feature {name!r} is not in the config")
        source, spec = lookup[name]
        out[source].append(spec)
    return out


def _signature(raw: str, features: Sequence[FeatureSpec]) -> tuple[str, ...]:
    return tuple(f.name for f in features if f.regex.search(raw))


def fscore(line: LogLine, selected: SelectedFeatures, config: PipelineConfig) -> int:
    """Number of distinct features of F, of the line's own source, matching the line at least once."""
    return len(_signature(line.raw, features_by_source(selected, config).get(line.source, [])))


def extract_levels(
    lines: Iterable[LogLine],
    features: Sequence[FeatureSpec],
    threshold: int,
) -> list[ScoredLine]:
    """Level-by-level extraction over one source's window lines; input order within a level."""
    if threshold < 1:
        raise DataError(f"threshold must be >= 1, got {threshold}")
    by_level: dict[int, list[ScoredLine]] = {}
    for line in lines:
        sig = _signature(line.raw, features)
        if sig:
            by_level.setdefault(len(sig), []).append(ScoredLine(line, len(sig), sig))
    retrieved: list[ScoredLine] = []
    level = len(features)
    while len(retrieved) < threshold and level > 0:
        retrieved.extend(by_level.get(level, []))
        level -= 1
    return retrieved


def window_lines(paths: Sequence[str | Path], spec: SourceSpec, start: int, stop: int) -> Iterable[LogLine]:
    """Lines of one source whose timestamp lies in [start, stop); unparseable lines are skipped."""
    for path in paths:
        for offset, raw in iter_lines(path, spec.encoding):
            dt = try_timestamp(raw, spec)
            if dt is None:
                continue
            if start <= to_epoch(dt) < stop:
                yield LogLine(spec.name, dt, raw, offset)


def deparse(
    config: PipelineConfig,
    inputs: Mapping[str, Sequence[str | Path]],
    window: tuple[int, int],
    selected: SelectedFeatures,
    threshold: int,
) -> DeparseResult:
    """
    Retrieve the lines of every source with inputs for the window [start, end + common interval).

    Raises:
        DataError: An input cannot be read, or F names a feature missing from the config.
    """
    if threshold < 1:
        raise DataError(f"threshold must be >= 1, got {threshold}")
    start, end = window
    stop = end + config.common_interval_seconds
    per_source = features_by_source(selected, config)
    results = []
    for spec in config.sources:
        paths = inputs.get(spec.name)
        if not paths:
            continue
        features = per_source[spec.name]
        part = SourceDeparse(spec.name, [f.name for f in features])
        in_window: list[LogLine] = []
        for line in window_lines(paths, spec, start, stop):
            part.lines_in_window += 1
            if features:
                in_window.append(line)
        part.lines = extract_levels(in_window, features, threshold)
        results.append(part)
        logger.info(
            "deparse_source",
            source=spec.name,
            in_window=part.lines_in_window,
            retrieved=len(part.lines),
            levels=part.lines_per_level,
        )
    notice = None
    if results and not any(p.lines_in_window for p in results):
        notice = "window outside the data range: no input line falls inside it"
        logger.warning("deparse_empty_window", start=format_instant(start), end=format_instant(end))
    return DeparseResult(start, end, results, notice)


def write_deparse(
    result: DeparseResult,
    selected: SelectedFeatures,
    config: PipelineConfig,
    out_dir: str | Path,
) -> None:
    """`<source>.log` with `<fscore>\\t<raw line>` in extraction order (original bytes), plus summary.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for part in result.sources:
        encoding = config.source(part.source).encoding
        with open(out / f"{part.source}.log", "wb") as fh:
            for s in part.lines:
                fh.write(f"{s.fscore}\t".encode("ascii") + encode_raw(s.line.raw, encoding) + b"\n")
    summary = {
        "window": {"start": format_instant(result.start), "end": format_instant(result.end)},
        "features": [{"name": n, "contribution": v} for n, v in selected.features],
        "sources": {
            p.source: {
                "features": p.features,
                "lines_in_window": p.lines_in_window,
                "retrieved": len(p.lines),
                "lines_per_level": {str(k): v for k, v in p.lines_per_level.items()},
                "distinct_signatures": len(p.signatures),
                "signatures": p.signatures,
            }
            for p in result.sources
        },
        "totals": {
            "lines_in_window": sum(p.lines_in_window for p in result.sources),
            "retrieved": result.retrieved,
            "distinct_signatures": sum(len(p.signatures) for p in result.sources),
        },
        "notice": result.notice,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
