"""
Phase I iteration support: exclude inspected outliers, refit, and check whether they were
polluting the model by comparing the variance captured per PC with and without them.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import structlog

from mbda.errors import DataError
from mbda.pca.core import PcaModel
from mbda.timestamps import parse_instant

logger = structlog.get_logger(__name__)


@dataclass(frozen=True)
class VarianceComparison:
    """Per-PC variance fractions of two models, side by side."""

    fractions_full: list[float]
    fractions_reduced: list[float]
    relative_change: list[float]
    max_relative_change: float
    threshold: float
    polluted: bool
    n_full: int
    n_reduced: int

    def as_json(self) -> dict[str, object]:
        return asdict(self)


def phase1_variance_check(
    model_full: PcaModel,
    model_reduced: PcaModel,
    threshold: float = 0.10,
) -> VarianceComparison:
    """
    Compare the first max(A_full, A_reduced) PCs; the change of PC i is |f_reduced - f_full| / f_full.

    Raises:
        DataError: The models have a different number of features.
    """
    if model_full.n_features != model_reduced.n_features:
        raise DataError(
            f"models disagree on the feature count ({model_full.n_features} vs {model_reduced.n_features})"
        )
    k = max(model_full.n_components, model_reduced.n_components)
    full = model_full.variance_fractions[:k]
    reduced = model_reduced.variance_fractions[:k]
    with np.errstate(divide="ignore", invalid="ignore"):
        change = np.where(full > 0, np.abs(reduced - full) / full, np.where(reduced == full, 0.0, np.inf))
    worst = float(change.max()) if len(change) else 0.0
    report = VarianceComparison(
        fractions_full=full.tolist(),
        fractions_reduced=reduced.tolist(),
        relative_change=change.tolist(),
        max_relative_change=worst,
        threshold=threshold,
        polluted=worst > threshold,
        n_full=model_full.n_calibration,
        n_reduced=model_reduced.n_calibration,
    )
    if report.polluted:
        logger.warning("phase1_pollution", max_relative_change=round(worst, 6), threshold=threshold)
    return report


def read_exclusions(path: str | Path) -> list[tuple[int, int]]:
    """
    Timestamps to drop from calibration: one ISO instant per line, or `START END` for an inclusive
    range. Blank lines and `#` comments are ignored.
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise DataError(f"cannot read exclusion file {path}: {e}") from e
    ranges = []
    for i, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].split()
        if not body:
            continue
        if len(body) > 2:
            raise DataError(f"{path}:{i}: expected an instant or a START END pair")
        start = parse_instant(body[0])
        end = parse_instant(body[-1])
        if end < start:
            raise DataError(f"{path}:{i}: range ends before it starts")
        ranges.append((start, end))
    return ranges


def exclusion_mask(timestamps: np.ndarray, ranges: Sequence[tuple[int, int]]) -> np.ndarray:
    """True for rows to keep."""
    ts = np.asarray(timestamps, dtype=np.int64)
    keep = np.ones(len(ts), dtype=bool)
    for start, end in ranges:
        keep &= ~((ts >= start) & (ts <= end))
    return keep


def write_report(report: VarianceComparison, path: str | Path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(report.as_json(), indent=2) + "\n", encoding="utf-8")
