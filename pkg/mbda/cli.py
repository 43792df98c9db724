"""
Single entry point for the pipeline: parse, fuse, calibrate, monitor, diagnose, deparse, run, version.

Every step reads and writes files, so steps can be run one by one and inspected; `run` chains
them into sub-directories of one output directory.
"""

from __future__ import annotations

import argparse
import glob
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Sequence

import numpy as np
import structlog

from mbda import __version__
from mbda.config.loader import config_digest, load_config_file
from mbda.config.schemas import PipelineConfig
from mbda.constants import EXIT_DATA, EXIT_INTERNAL, EXIT_OK, EXIT_USAGE
from mbda.diagnosis.contributions import read_diagnosis, select_features, window_contributions, write_diagnosis
from mbda.diagnosis.deparse import deparse, write_deparse
from mbda.errors import ConfigError, DataError, MbdaError
from mbda.fusion import FusedFile, fuse, open_fused, resample, write_fused
from mbda.manifest import RunManifest
from mbda.monitor.clustering import cluster_plot, write_cluster_plot
from mbda.monitor.phase1 import exclusion_mask, phase1_variance_check, read_exclusions, write_report
from mbda.monitor.statistics import (
    Phase,
    control_limits,
    monitor_matrix,
    monitor_records,
    phase_alpha,
    statistics,
    write_monitor_csv,
)
from mbda.monitor.triage import read_anomalies, triage, write_anomalies
from mbda.parsing.parser import parse_files
from mbda.parsing.streams import read_stream, write_stream
from mbda.pca.core import PcaModel, calibrate_passes
from mbda.pca.model_file import load_model, save_model
from mbda.timestamps import format_instant, parse_instant

logger = structlog.get_logger(__name__)


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with EXIT_USAGE instead of argparse's 2 (2 is reserved for data errors)."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def configure_logging(level: str = "info", json_output: bool = False) -> None:
    """structlog to stderr; key=value lines, or JSON lines with json_output."""
    renderer = structlog.processors.JSONRenderer() if json_output else structlog.dev.ConsoleRenderer(colors=False)
    structlog.configure(
        processors=[
            structlog.processors.add_log_level,
            structlog.processors.TimeStamper(fmt="iso", utc=True),
            renderer,
        ],
        wrapper_class=structlog.make_filtering_bound_logger(getattr(logging, level.upper())),
        logger_factory=structlog.PrintLoggerFactory(sys.stderr),
        cache_logger_on_first_use=False,
    )


def _instant(text: str) -> int:
    try:
        return parse_instant(text)
    except DataError as e:
        raise argparse.ArgumentTypeError(str(e)) from e


def _load(args: argparse.Namespace) -> tuple[PipelineConfig, RunManifest]:
    config = load_config_file(args.config)
    return config, RunManifest(command=args.command, config_digest=config_digest(config))


def _split_input(value: str, config: PipelineConfig) -> tuple[str | None, str]:
    """SOURCE=PATH when the prefix names a configured source, otherwise a bare path."""
    name, sep, path = value.partition("=")
    if sep and name in {s.name for s in config.sources}:
        return name, path
    return None, value


def _raw_inputs(config: PipelineConfig, values: Sequence[str] | None) -> dict[str, list[str]]:
    """Raw log files per source, from --input or from each source's `files` globs."""
    inputs: dict[str, list[str]] = {s.name: [] for s in config.sources}
    for value in values or []:
        source, path = _split_input(value, config)
        if source is None:
            if len(config.sources) != 1:
                raise ConfigError(f"input {value!r}: name its source as SOURCE=PATH")
            source = config.sources[0].name
        inputs[source].append(path)
    if not values:
        for s in config.sources:
            inputs[s.name] = sorted({p for pattern in s.files for p in glob.glob(pattern)})
    missing = [name for name, paths in inputs.items() if not paths]
    if missing:
        raise ConfigError(f"no input files for source(s): {', '.join(missing)}")
    return inputs


def _stream_inputs(config: PipelineConfig, values: Sequence[str] | None) -> dict[str, str]:
    """Stream CSV per source: SOURCE=PATH, or a bare path named <source>.csv."""
    names = {s.name for s in config.sources}
    inputs: dict[str, str] = {}
    for value in values or []:
        source, path = _split_input(value, config)
        if source is None:
            source = Path(value).stem
            if source not in names:
                raise ConfigError(f"input {value!r}: cannot tell its source; use SOURCE=PATH")
        inputs[source] = path
    missing = [s.name for s in config.sources if s.name not in inputs]
    if missing:
        raise ConfigError(f"no stream file for source(s): {', '.join(missing)}")
    return inputs


def _single_input(values: Sequence[str] | None, what: str) -> str:
    if not values or len(values) != 1:
        raise ConfigError(f"expected exactly one --input ({what})")
    return values[0]


def _check_model(model: PcaModel, config: PipelineConfig, digest: str, model_digest: str) -> None:
    if list(model.feature_names) != config.qualified_feature_names:
        raise ConfigError("model features do not match the configured features")
    if digest != model_digest:
        logger.warning("config_digest_mismatch", model=model_digest[:12], config=digest[:12])


def cmd_version(_: argparse.Namespace) -> int:
    """Print version."""
    print(__version__)
    return EXIT_OK


def cmd_parse(args: argparse.Namespace) -> int:
    """Raw logs to one FeatureStream CSV per source."""
    config, manifest = _load(args)
    inputs = _raw_inputs(config, args.input)
    out = Path(args.out)
    stats: dict[str, dict[str, int]] = {}
    for spec in config.sources:
        for p in inputs[spec.name]:
            manifest.add_input(p)
        with manifest.step(f"parse.{spec.name}"):
            stream, st = parse_files(inputs[spec.name], spec, workers=args.workers or config.workers)
        write_stream(stream, out / "streams" / f"{spec.name}.csv")
        stats[spec.name] = asdict(st)
    for key in ("lines_read", "lines_unparseable", "intervals"):
        manifest.counts[key] = sum(s[key] for s in stats.values())
    if manifest.counts["lines_read"] == 0:
        raise DataError("the inputs contain no log lines")
    (out / "parse_stats.json").write_text(json.dumps(stats, indent=2) + "\n", encoding="utf-8")
    manifest.write(out)
    return EXIT_OK


def cmd_fuse(args: argparse.Namespace) -> int:
    """Resample every stream to the common interval and append the columns."""
    config, manifest = _load(args)
    inputs = _stream_inputs(config, args.input)
    streams = []
    with manifest.step("fuse"):
        for spec in config.sources:
            manifest.add_input(inputs[spec.name])
            streams.append(resample(read_stream(inputs[spec.name], spec), config.common_interval_seconds))
        matrix = fuse(streams)
    out = Path(args.out)
    write_fused(matrix, out / "fused.csv")
    manifest.counts.update(rows=matrix.shape[0], features=matrix.shape[1])
    manifest.write(out)
    return EXIT_OK


def _triage_options(args: argparse.Namespace, config: PipelineConfig) -> dict[str, object]:
    return {
        "top_k": args.top_k or config.top_k,
        "interval_seconds": config.common_interval_seconds,
        "coalesce": config.coalesce_windows and not args.no_coalesce,
        "threshold": config.coalesce_threshold,
    }


def _scan_statistics(model: PcaModel, fused: FusedFile) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Timestamps, D and Q of every row of a fused file, one block at a time."""
    parts = [(chunk.timestamps, *statistics(model, chunk.counts)) for chunk in fused.chunks()]
    if not parts:
        return np.zeros(0, np.int64), np.zeros(0), np.zeros(0)
    timestamps, d, q = (np.concatenate(column) for column in zip(*parts))
    return timestamps, d, q


def cmd_calibrate(args: argparse.Namespace) -> int:
    """Phase I: fit the model, its control limits, and chart the calibration data itself."""
    config, manifest = _load(args)
    path = _single_input(args.input, "fused CSV")
    manifest.add_input(path)
    fused = open_fused(path, config.common_interval_seconds, config.qualified_feature_names)
    out = Path(args.out)
    fit = dict(
        policy=config.component_policy,
        weights=config.weights,
        autoscale=config.preprocessing.autoscale,
        feature_names=fused.feature_names,
    )
    excluded: list[tuple[int, int]] = []
    with manifest.step("calibrate"):
        model = calibrate_passes(fused.counts, **fit)  # type: ignore[arg-type]
        if args.exclude:
            manifest.add_input(args.exclude)
            excluded = read_exclusions(args.exclude)
            full = model
            model = calibrate_passes(
                lambda: fused.counts(lambda ts: exclusion_mask(ts, excluded)), **fit  # type: ignore[arg-type]
            )
            report = phase1_variance_check(full, model, config.pollution_threshold)
            write_report(report, out / "phase1_check.json")
        timestamps, d, q = _scan_statistics(model, fused)
        keep = exclusion_mask(timestamps, excluded)
        if args.exclude:
            manifest.counts["excluded"] = int((~keep).sum())
        limits = control_limits(d[keep], q[keep], config.ucl_percentile)
    save_model(out / "model.json", model, limits, manifest.config_digest, config.preprocessing.autoscale)
    with manifest.step("monitor"):
        records = monitor_records(timestamps, d, q, limits, phase_alpha(model, args.phase))
        windows = triage(records, **_triage_options(args, config))  # type: ignore[arg-type]
        points = cluster_plot(records, limits, args.max_clusters or config.max_clusters, config.cluster_member_cap)
    write_monitor_csv(records, out / "calibration_monitor.csv")
    write_anomalies(windows, out / "anomalies.jsonl")
    write_cluster_plot(points, out / "cluster_plot.csv")
    manifest.counts.update(
        rows=len(records),
        components=model.n_components,
        anomalies=len(windows),
        clusters=len(points),
    )
    manifest.write(out)
    return EXIT_OK


def cmd_monitor(args: argparse.Namespace) -> int:
    """Phase II: score new observations against a calibrated model."""
    config, manifest = _load(args)
    path = _single_input(args.input, "fused CSV")
    manifest.add_input(path)
    manifest.add_input(args.model)
    model, limits, doc = load_model(args.model)
    _check_model(model, config, manifest.config_digest, doc.config_digest)
    fused = open_fused(path, config.common_interval_seconds, config.qualified_feature_names)
    alpha = phase_alpha(model, args.phase)
    with manifest.step("monitor"):
        records = [
            record
            for chunk in fused.chunks()
            for record in monitor_matrix(model, limits, chunk.counts, chunk.timestamps, alpha)
        ]
        windows = triage(records, **_triage_options(args, config))  # type: ignore[arg-type]
    out = Path(args.out)
    write_monitor_csv(records, out / "monitor.csv")
    write_anomalies(windows, out / "anomalies.jsonl")
    manifest.counts.update(rows=len(records), anomalies=len(windows))
    manifest.write(out)
    return EXIT_OK


def cmd_diagnose(args: argparse.Namespace) -> int:
    """US contributions of an anomaly window and the selected features F."""
    config, manifest = _load(args)
    path = _single_input(args.input, "fused CSV")
    manifest.add_input(path)
    manifest.add_input(args.model)
    model, _, doc = load_model(args.model)
    _check_model(model, config, manifest.config_digest, doc.config_digest)
    fused = open_fused(path, config.common_interval_seconds, config.qualified_feature_names)
    start, end = args.window
    with manifest.step("diagnose"):
        contributions = window_contributions(model, fused.window(start, end), start, end)
        selected = select_features(contributions, config.feature_selection)
    out = Path(args.out)
    write_diagnosis(contributions, selected, out / "diagnosis.json")
    manifest.counts["selected"] = len(selected)
    manifest.write(out)
    return EXIT_OK


def cmd_deparse(args: argparse.Namespace) -> int:
    """Raw lines of the window ranked by fscore against F."""
    config, manifest = _load(args)
    inputs = _raw_inputs(config, args.input)
    for paths in inputs.values():
        for p in paths:
            manifest.add_input(p)
    manifest.add_input(args.features)
    window, selected = read_diagnosis(args.features)
    if args.window:
        window = tuple(args.window)
    with manifest.step("deparse"):
        result = deparse(config, inputs, window, selected, args.threshold or config.deparse_threshold)
    write_deparse(result, selected, config, args.out)
    manifest.counts["retrieved"] = result.retrieved
    manifest.write(args.out)
    return EXIT_OK


def _invoke(argv: list[str]) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


def cmd_run(args: argparse.Namespace) -> int:
    """All five steps; each lands in its own sub-directory exactly as the single commands write it."""
    if args.phase == Phase.II and not args.model:
        raise ConfigError("phase 2 needs --model")
    config, manifest = _load(args)
    out = Path(args.out)
    common = ["--config", args.config]
    raw = [v for value in (args.input or []) for v in ("--input", value)]
    with manifest.step("parse"):
        _invoke(["parse", *common, "--out", str(out / "parse"), *raw, "--workers", str(args.workers or config.workers)])
    streams = [f"{s.name}={out / 'parse' / 'streams' / f'{s.name}.csv'}" for s in config.sources]
    with manifest.step("fuse"):
        _invoke(["fuse", *common, "--out", str(out / "fuse"), *[v for s in streams for v in ("--input", s)]])
    fused = str(out / "fuse" / "fused.csv")
    triage_flags = ["--top-k", str(args.top_k or config.top_k), *(["--no-coalesce"] if args.no_coalesce else [])]
    if args.phase == Phase.I:
        step_dir = out / "calibrate"
        extra = ["--exclude", args.exclude] if args.exclude else []
        if args.max_clusters:
            extra += ["--max-clusters", str(args.max_clusters)]
        with manifest.step("calibrate"):
            _invoke(["calibrate", *common, "--out", str(step_dir), "--input", fused, "--phase", "1", *triage_flags, *extra])
        model = str(step_dir / "model.json")
    else:
        step_dir = out / "monitor"
        model = args.model
        with manifest.step("monitor"):
            _invoke(["monitor", *common, "--out", str(step_dir), "--input", fused, "--model", model, "--phase", "2", *triage_flags])
    windows = read_anomalies(step_dir / "anomalies.jsonl", config.common_interval_seconds)
    threshold = ["--threshold", str(args.threshold)] if args.threshold else []
    for w in windows:
        anomaly_dir = out / f"anomaly-{w.rank}"
        window = [format_instant(w.start), format_instant(w.end)]
        with manifest.step(f"anomaly-{w.rank}"):
            _invoke(["diagnose", *common, "--out", str(anomaly_dir / "diagnose"), "--input", fused,
                     "--model", model, "--window", *window])
            _invoke(["deparse", *common, "--out", str(anomaly_dir / "deparse"), *raw,
                     "--features", str(anomaly_dir / "diagnose" / "diagnosis.json"), *threshold])
    manifest.counts["anomalies"] = len(windows)
    manifest.write(out)
    logger.info("run_done", out=str(out), anomalies=len(windows), phase=int(args.phase))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="mbda",
        description="Log anomaly detection and diagnosis: parse, fuse, calibrate, monitor, diagnose, deparse, run.",
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    common = _Parser(add_help=False)
    common.add_argument("--config", required=True, help="Pipeline YAML")
    common.add_argument("--out", required=True, help="Output directory")
    common.add_argument("--log-level", default="info", choices=["debug", "info", "warning", "error"])
    common.add_argument("--log-json", action="store_true", help="Log JSON lines instead of key=value")

    def add(name: str, help_text: str, func: object, inputs_help: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text, parents=[common])
        p.add_argument("--input", nargs="+", action="extend", default=None, metavar="PATH", help=inputs_help)
        p.set_defaults(func=func)
        return p

    def add_triage(p: argparse.ArgumentParser, phase: int) -> None:
        p.add_argument("--phase", type=int, choices=[1, 2], default=phase, help="I: alpha = captured variance; II: A/M")
        p.add_argument("--top-k", type=int, default=None, help="Anomaly windows to report (default: config top_k)")
        p.add_argument("--no-coalesce", action="store_true", help="Rank single intervals, never runs of them")

    raw_help = "Raw log file as SOURCE=PATH (bare PATH for a single source); default: the config's file globs"

    p = add("parse", "Raw logs to per-source feature streams", cmd_parse, raw_help)
    p.add_argument("--workers", type=int, default=None, help="Parse processes (default: config workers)")

    add("fuse", "Fuse feature streams at the common interval", cmd_fuse, "Stream CSV as SOURCE=PATH or <source>.csv")

    p = add("calibrate", "Phase I: fit the model and chart the calibration data", cmd_calibrate, "Fused CSV")
    add_triage(p, 1)
    p.add_argument("--exclude", default=None, metavar="TIMESTAMPS-FILE", help="Refit without these timestamps")
    p.add_argument("--max-clusters", type=int, default=None, help="Cluster points in the D-vs-Q chart data")

    p = add("monitor", "Phase II: score new data against a model", cmd_monitor, "Fused CSV")
    add_triage(p, 2)
    p.add_argument("--model", required=True, help="Model file from calibrate")

    p = add("diagnose", "US contributions and feature selection for a window", cmd_diagnose, "Fused CSV")
    p.add_argument("--model", required=True, help="Model file from calibrate")
    p.add_argument("--window", nargs=2, type=_instant, required=True, metavar=("START", "END"))

    p = add("deparse", "Retrieve raw lines of a window ranked by fscore", cmd_deparse, raw_help)
    p.add_argument("--features", required=True, help="diagnosis.json from diagnose")
    p.add_argument("--window", nargs=2, type=_instant, default=None, metavar=("START", "END"),
                   help="Override the diagnosis window")
    p.add_argument("--threshold", type=int, default=None, help="Lines per source (default: config deparse_threshold)")

    p = add("run", "All steps end to end", cmd_run, raw_help)
    add_triage(p, 1)
    p.add_argument("--model", default=None, help="Model file (phase 2)")
    p.add_argument("--exclude", default=None, metavar="TIMESTAMPS-FILE")
    p.add_argument("--max-clusters", type=int, default=None)
    p.add_argument("--threshold", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)

    p_version = sub.add_parser("version", help="Print version")
    p_version.set_defaults(func=cmd_version)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if hasattr(args, "log_level"):
        configure_logging(args.log_level, args.log_json)
    try:
        return args.func(args)
    except ConfigError as e:
        logger.error("config_error", error=str(e))
        print(f"mbda: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except MbdaError as e:
        logger.error("data_error", error=str(e), kind=type(e).__name__)
        print(f"mbda: error: {e}", file=sys.stderr)
        return EXIT_DATA
    except Exception as e:
        logger.exception("internal_error")
        print(f"mbda: internal error: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
