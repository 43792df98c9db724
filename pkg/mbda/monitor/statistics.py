"""
Monitoring statistics: D (Hotelling T2 on the scores), Q (squared residual norm),
empirical control limits and the phase-dependent Tscore used for triage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd
import structlog

from mbda.constants import UCL_FLOOR
from mbda.errors import DataError
from mbda.pca.core import PcaModel, apply_preprocess, project, residual
from mbda.timestamps import format_instant

logger = structlog.get_logger(__name__)


class Phase(IntEnum):
    """I: exploratory (data inspected = data calibrated); II: monitoring new data."""

    I = 1  # noqa: E741
    II = 2


@dataclass(frozen=True, slots=True)
class MonitorRecord:
    timestamp: int
    d: float
    q: float
    tscore: float


@dataclass(frozen=True, slots=True)
class ControlLimits:
    ucl_d: float
    ucl_q: float
    percentile: float
    n_calibration: int

    def __post_init__(self) -> None:
        if not (self.ucl_d > 0 and self.ucl_q > 0):
            raise DataError("control limits must be positive")


def d_statistic(t: np.ndarray, model: PcaModel) -> float:
    """Hotelling T^2 of one score vector under the calibration score covariance.

    Raises:
        ModelError: The score covariance is singular (names the degenerate component).
    """
    scores = np.asarray(t, dtype=np.float64).reshape(-1)
    if len(scores) != model.n_components:
        raise DataError(f"got {len(scores)} scores, model has {model.n_components} components")
    return float(scores @ model.solve_scores_cov(scores))


def q_statistic(e: np.ndarray) -> float:
    """Q = e e^T."""
    res = np.asarray(e, dtype=np.float64).reshape(-1)
    return float(res @ res)


def statistics(model: PcaModel, counts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """D and Q for every raw count row of a block."""
    x = apply_preprocess(np.atleast_2d(np.asarray(counts, dtype=np.float64)), model.preprocess)
    t = project(x, model)
    e = residual(x, t, model)
    d = np.einsum("ij,ij->i", t, model.solve_scores_cov(t))
    q = np.einsum("ij,ij->i", e, e)
    return np.clip(d, 0.0, None), q


def compute_ucl(values: Sequence[float] | np.ndarray, percentile: float) -> float:
    """
    Nearest-rank percentile: the value at 1-based index ceil(p * N) of the ascending sort.

    Raises:
        DataError: Empty input.
    """
    arr = np.sort(np.asarray(values, dtype=np.float64).reshape(-1))
    if len(arr) == 0:
        raise DataError("cannot compute a control limit from no values")
    # decimal text of p so 0.99 * 100 is exactly 99
    rank = math.ceil(Fraction(repr(float(percentile))) * len(arr))
    rank = min(max(rank, 1), len(arr))
    return float(arr[rank - 1])


def control_limits(d: np.ndarray, q: np.ndarray, percentile: float) -> ControlLimits:
    """UCLs of calibration D and Q; a zero limit is floored so Tscore stays finite."""
    ucl_d = compute_ucl(d, percentile)
    ucl_q = compute_ucl(q, percentile)
    if ucl_d <= 0 or ucl_q <= 0:
        logger.warning("ucl_floored", ucl_d=ucl_d, ucl_q=ucl_q, floor=UCL_FLOOR)
    return ControlLimits(max(ucl_d, UCL_FLOOR), max(ucl_q, UCL_FLOOR), percentile, len(np.asarray(d)))


def tscores(d: np.ndarray, q: np.ndarray, limits: ControlLimits, alpha: float) -> np.ndarray:
    """T = alpha * D / UCL_D + (1 - alpha) * Q / UCL_Q, element-wise."""
    if not 0.0 <= alpha <= 1.0:
        raise DataError(f"alpha must lie in [0, 1], got {alpha}")
    d = np.asarray(d, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    return alpha * d / limits.ucl_d + (1.0 - alpha) * q / limits.ucl_q


def tscore(d: float, q: float, limits: ControlLimits, alpha: float) -> float:
    return float(tscores(np.float64(d), np.float64(q), limits, alpha))


def phase_alpha(model: PcaModel, phase: Phase | int) -> float:
    """Phase I: captured variance fraction. Phase II: A / M."""
    if Phase(phase) is Phase.I:
        return float(model.captured_variance_fraction)
    return model.n_components / model.n_features


def monitor_records(
    timestamps: Sequence[int] | np.ndarray,
    d: np.ndarray,
    q: np.ndarray,
    limits: ControlLimits,
    alpha: float,
) -> list[MonitorRecord]:
    """MonitorRecords from statistics already computed, one per timestamp."""
    ts = np.asarray(timestamps, dtype=np.int64).reshape(-1)
    d = np.asarray(d, dtype=np.float64).reshape(-1)
    q = np.asarray(q, dtype=np.float64).reshape(-1)
    if not len(ts) == len(d) == len(q):
        raise DataError("one timestamp per row is required")
    t = tscores(d, q, limits, alpha)
    return [
        MonitorRecord(int(a), float(b), float(c), float(e))
        for a, b, c, e in zip(ts.tolist(), d.tolist(), q.tolist(), t.tolist())
    ]


def monitor_matrix(
    model: PcaModel,
    limits: ControlLimits,
    counts: np.ndarray,
    timestamps: Sequence[int] | np.ndarray,
    alpha: float,
) -> list[MonitorRecord]:
    """MonitorRecords for every row of a raw count block."""
    ts = np.asarray(timestamps, dtype=np.int64).reshape(-1)
    if len(ts) != np.atleast_2d(counts).shape[0]:
        raise DataError("one timestamp per row is required")
    if len(ts) == 0:
        return []
    d, q = statistics(model, counts)
    return monitor_records(ts, d, q, limits, alpha)


def write_monitor_csv(records: Sequence[MonitorRecord], path: str | Path) -> None:
    """timestamp,d,q,tscore"""
    df = pd.DataFrame(
        {
            "timestamp": [format_instant(r.timestamp) for r in records],
            "d": [r.d for r in records],
            "q": [r.q for r in records],
            "tscore": [r.tscore for r in records],
        }
    )
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, lineterminator="\n")
