"""
Pre-diagnosis with Univariate-Squared (US) contributions.

values[m] = x'[m] * |x'[m]|, where x' is the preprocessed observation (the mean of the window's
preprocessed rows for a multi-interval window). Large magnitudes of either sign are relevant.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import structlog

from mbda.config.schemas import FeatureSelectionPolicy
from mbda.errors import DataError
from mbda.fusion import FusedMatrix
from mbda.pca.core import PcaModel, apply_preprocess
from mbda.timestamps import format_instant, parse_instant

logger = structlog.get_logger(__name__)


@dataclass(frozen=True, eq=False)
class ContributionVector:
    start: int
    end: int
    values: np.ndarray
    feature_names: tuple[str, ...] = ()

    @property
    def us_scalar(self) -> float:
        """x^T |x|, the scalar form: the sum of the vector."""
        return float(self.values.sum())


@dataclass(frozen=True)
class SelectedFeatures:
    """F: (qualified feature name, contribution), descending by |contribution|."""

    features: tuple[tuple[str, float], ...]
    notes: tuple[str, ...] = field(default=())

    @property
    def names(self) -> list[str]:
        return [name for name, _ in self.features]

    def __len__(self) -> int:
        return len(self.features)


def us_contributions(
    x: np.ndarray,
    window: tuple[int, int] = (0, 0),
    feature_names: Sequence[str] = (),
) -> ContributionVector:
    """Signed squares of one preprocessed row, or of the column means of a block of rows."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 2:
        if arr.shape[0] == 0:
            raise DataError("no observations in the anomaly window")
        arr = arr.mean(axis=0)
    if arr.ndim != 1:
        raise DataError("contributions need a vector or a block of rows")
    if feature_names and len(feature_names) != len(arr):
        raise DataError(f"got {len(arr)} values for {len(feature_names)} features")
    return ContributionVector(window[0], window[1], arr * np.abs(arr), tuple(feature_names))


def window_contributions(model: PcaModel, matrix: FusedMatrix, start: int, end: int) -> ContributionVector:
    """US over the fused rows with start <= timestamp <= end."""
    if tuple(matrix.feature_names) != tuple(model.feature_names):
        raise DataError("fused matrix columns do not match the model features")
    rows = matrix.counts[matrix.rows_between(start, end)]
    if len(rows) == 0:
        raise DataError(f"no observations between {format_instant(start)} and {format_instant(end)}")
    x = apply_preprocess(rows, model.preprocess)
    return us_contributions(x, (start, end), model.feature_names)


def select_features(c: ContributionVector, policy: FeatureSelectionPolicy) -> SelectedFeatures:
    """
    Keep |value| >= r * max|value| (relative) or the k largest nonzero |value| (top_k).

    Features with negative contribution stay in F but get a note: regex matching can only find
    events that happened, not ones that are missing.
    """
    values = c.values
    names = c.feature_names or tuple(f"feature_{i}" for i in range(len(values)))
    mags = np.abs(values)
    top = float(mags.max()) if len(mags) else 0.0
    if top == 0.0:
        logger.warning("all_zero_contributions", window_start=format_instant(c.start))
        return SelectedFeatures((), ("all contributions are zero; nothing to diagnose",))
    order = np.argsort(-mags, kind="stable")
    if policy.relative is not None:
        cut = policy.relative * top
        keep = [int(i) for i in order if mags[i] >= cut]
    else:
        keep = [int(i) for i in order if mags[i] > 0][: policy.top_k]
    features = tuple((names[i], float(values[i])) for i in keep)
    negative = [name for name, v in features if v < 0]
    notes: tuple[str, ...] = ()
    if negative:
        logger.warning("negative_contributions", features=negative)
        notes = tuple(f"{name}: fewer events than normal; de-parsing cannot retrieve absent lines" for name in negative)
    return SelectedFeatures(features, notes)


def write_diagnosis(c: ContributionVector, selected: SelectedFeatures, path: str | Path) -> None:
    doc = {
        "window": {"start": format_instant(c.start), "end": format_instant(c.end)},
        "us_scalar": c.us_scalar,
        "contributions": dict(zip(c.feature_names, c.values.tolist())),
        "features": [{"name": n, "contribution": v} for n, v in selected.features],
        "notes": list(selected.notes),
    }
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def read_diagnosis(path: str | Path) -> tuple[tuple[int, int], SelectedFeatures]:
    """Window and F from a diagnosis file."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        window = (parse_instant(doc["window"]["start"]), parse_instant(doc["window"]["end"]))
        features = tuple((str(f["name"]), float(f["contribution"])) for f in doc["features"])
        notes = tuple(str(n) for n in doc.get("notes", []))
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        raise DataError(f"cannot read diagnosis file {path}: {e}") from e
    return window, SelectedFeatures(features, notes)
