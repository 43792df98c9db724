"""
PCA normality model from an iteratively accumulated cross-product matrix.

Two passes over the calibration rows, each consuming chunks so N is not bounded by memory:

- pass 1: per-column mean and sample standard deviation (pairwise merge of n, mean, M2);
- pass 2: X'^T X' over the preprocessed rows x' = w * (x - mu) / sigma.

The loadings are the top-A eigenvectors of X'^T X'. Both accumulators merge by addition,
so chunks can come from parallel workers in any grouping.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np
import structlog
from scipy import linalg

from mbda.config.schemas import ComponentPolicy
from mbda.constants import DEFAULT_CHUNK_ROWS, RANK_TOLERANCE
from mbda.errors import CalibrationError, DataError, ModelError

logger = structlog.get_logger(__name__)


@dataclass(frozen=True, eq=False)
class PreprocessParams:
    """Centering, scaling and weighting vectors, one entry per fused feature."""

    mean: np.ndarray
    scale: np.ndarray
    weight: np.ndarray

    def __post_init__(self) -> None:
        mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        scale = np.asarray(self.scale, dtype=np.float64).reshape(-1)
        weight = np.asarray(self.weight, dtype=np.float64).reshape(-1)
        if not (len(mean) == len(scale) == len(weight)):
            raise DataError("mean, scale and weight must have the same length")
        if np.any(scale <= 0):
            raise DataError("scale entries must be positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "scale", scale)
        object.__setattr__(self, "weight", weight)

    @property
    def n_features(self) -> int:
        return len(self.mean)


@dataclass(frozen=True, eq=False)
class _Moments:
    n: int
    mean: np.ndarray
    m2: np.ndarray

    def merge(self, other: _Moments) -> _Moments:
        if self.n == 0:
            return other
        if other.n == 0:
            return self
        n = self.n + other.n
        delta = other.mean - self.mean
        mean = self.mean + delta * (other.n / n)
        m2 = self.m2 + other.m2 + delta**2 * (self.n * other.n / n)
        return _Moments(n, mean, m2)


def _chunk_moments(chunk: np.ndarray) -> _Moments:
    x = np.asarray(chunk, dtype=np.float64)
    if x.shape[0] == 0:
        return _Moments(0, np.zeros(x.shape[1]), np.zeros(x.shape[1]))
    mean = x.mean(axis=0)
    return _Moments(x.shape[0], mean, ((x - mean) ** 2).sum(axis=0))


def iter_chunks(x: np.ndarray, chunk_rows: int) -> Iterator[np.ndarray]:
    """Row blocks of an in-memory matrix."""
    if chunk_rows < 1:
        raise DataError("chunk_rows must be >= 1")
    for i in range(0, x.shape[0], chunk_rows):
        yield x[i:i + chunk_rows]


def fit_preprocess(
    chunks: Iterable[np.ndarray],
    weights: Sequence[float] | np.ndarray | None = None,
    autoscale: bool = True,
) -> PreprocessParams:
    """
    Mean and sample standard deviation (denominator N - 1) over the whole calibration stream.

    Constant columns get sigma = 1 (their centered values are all zero) and a warning.

    Raises:
        CalibrationError: Fewer than two rows.
        DataError: Chunks disagree on the column count.
    """
    moments: _Moments | None = None
    for chunk in chunks:
        c = np.atleast_2d(np.asarray(chunk, dtype=np.float64))
        part = _chunk_moments(c)
        if moments is not None and len(part.mean) != len(moments.mean):
            raise DataError(f"chunk has {len(part.mean)} columns, expected {len(moments.mean)}")
        moments = part if moments is None else moments.merge(part)
    if moments is None or moments.n < 2:
        raise CalibrationError(f"calibration needs at least 2 observations, got {0 if moments is None else moments.n}")
    m = len(moments.mean)
    w = np.ones(m) if weights is None else np.asarray(weights, dtype=np.float64)
    if len(w) != m:
        raise DataError(f"got {len(w)} weights for {m} features")
    if autoscale:
        scale = np.sqrt(moments.m2 / (moments.n - 1))
        constant = np.flatnonzero(~(scale > 0))
        if len(constant):
            logger.warning("constant_columns", count=len(constant), columns=constant.tolist()[:20])
            scale[constant] = 1.0
    else:
        scale = np.ones(m)
    return PreprocessParams(mean=moments.mean, scale=scale, weight=w)


def apply_preprocess(x: np.ndarray, params: PreprocessParams) -> np.ndarray:
    """x'[m] = w[m] * (x[m] - mu[m]) / sigma[m]; works on one row or a block of rows."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.shape[-1] != params.n_features:
        raise DataError(f"row has {arr.shape[-1]} features, model expects {params.n_features}")
    return params.weight * (arr - params.mean) / params.scale


@dataclass(frozen=True, eq=False)
class CrossProductAccumulator:
    """Running n and sum of x'^T x' over preprocessed rows."""

    n: int
    xtx: np.ndarray

    @classmethod
    def empty(cls, n_features: int) -> CrossProductAccumulator:
        return cls(0, np.zeros((n_features, n_features)))

    @property
    def n_features(self) -> int:
        return self.xtx.shape[0]

    def merge(self, other: CrossProductAccumulator) -> CrossProductAccumulator:
        if other.n_features != self.n_features:
            raise DataError(f"cannot merge accumulators of size {self.n_features} and {other.n_features}")
        return CrossProductAccumulator(self.n + other.n, self.xtx + other.xtx)


def accumulate(acc: CrossProductAccumulator, chunk: np.ndarray) -> CrossProductAccumulator:
    """xtx += chunk^T chunk; n += rows(chunk)."""
    c = np.asarray(chunk, dtype=np.float64)
    if c.ndim == 1:
        c = c.reshape(1, -1) if c.size else c.reshape(0, acc.n_features)
    if c.shape[1] != acc.n_features:
        raise DataError(f"chunk has {c.shape[1]} columns, accumulator expects {acc.n_features}")
    if c.shape[0] == 0:
        return acc
    return CrossProductAccumulator(acc.n + c.shape[0], acc.xtx + c.T @ c)


@dataclass(frozen=True, eq=False)
class PcaModel:
    """Calibrated normality model: preprocessed rows split into scores on the kept loadings plus residuals."""

    preprocess: PreprocessParams
    loadings: np.ndarray
    eigenvalues: np.ndarray
    scores_cov: np.ndarray
    captured_variance_fraction: float
    total_variance: float
    n_calibration: int
    spectrum: np.ndarray = field(repr=False)
    feature_names: tuple[str, ...] = ()

    @property
    def n_components(self) -> int:
        return self.loadings.shape[1]

    @property
    def n_features(self) -> int:
        return self.loadings.shape[0]

    @property
    def variance_fractions(self) -> np.ndarray:
        """Share of total variance per PC over the full spectrum."""
        return self.spectrum / self.total_variance

    @cached_property
    def _scores_cov_factor(self) -> tuple[np.ndarray, bool]:
        variances = np.diag(self.scores_cov)
        top = float(np.max(variances)) if len(variances) else 0.0
        if top <= 0:
            raise ModelError("score covariance is zero; model has no variance")
        low = np.flatnonzero(variances < RANK_TOLERANCE * top)
        if len(low):
            raise ModelError(f"score covariance is singular: component {int(low[0]) + 1} is degenerate")
        try:
            return linalg.cho_factor(self.scores_cov)
        except linalg.LinAlgError as e:
            raise ModelError(f"score covariance is not positive definite: {e}") from e

    def solve_scores_cov(self, t: np.ndarray) -> np.ndarray:
        """Solve the score covariance against t (t may be a block of score rows, one per row)."""
        return linalg.cho_solve(self._scores_cov_factor, np.asarray(t, dtype=np.float64).T).T


def _choose_components(spectrum: np.ndarray, total: float, rank: int, policy: ComponentPolicy, m: int) -> int:
    if policy.fixed is not None:
        a = policy.fixed
        if a > m:
            raise CalibrationError(f"requested {a} components but there are only {m} features")
        if a > rank:
            raise CalibrationError(f"requested {a} components but the calibration data has rank {rank}")
        return a
    cumulative = np.cumsum(spectrum) / total
    fraction = float(policy.variance_fraction or 1.0)
    a = int(np.searchsorted(cumulative, fraction - 1e-12) + 1)
    return max(1, min(a, rank))


def fit_pca(
    acc: CrossProductAccumulator,
    policy: ComponentPolicy,
    preprocess: PreprocessParams,
    feature_names: Sequence[str] = (),
) -> PcaModel:
    """
    Eigendecomposition of the accumulated cross-product; keep A components by policy.

    Each loading column is signed so its largest-magnitude element is positive.

    Raises:
        CalibrationError: Fewer than two rows, zero variance, or a fixed A above M or the rank.
    """
    if acc.n < 2:
        raise CalibrationError(f"calibration needs at least 2 observations, got {acc.n}")
    if preprocess.n_features != acc.n_features:
        raise DataError("preprocessing and accumulator disagree on the feature count")
    xtx = (acc.xtx + acc.xtx.T) / 2.0
    evals, evecs = linalg.eigh(xtx)
    order = np.argsort(evals, kind="stable")[::-1]
    spectrum = np.clip(evals[order], 0.0, None)
    evecs = evecs[:, order]
    total = float(np.trace(xtx))
    if not total > 0:
        raise CalibrationError("calibration data has no variance")
    rank = int(np.count_nonzero(spectrum > RANK_TOLERANCE * spectrum[0]))
    a = _choose_components(spectrum, total, rank, policy, acc.n_features)
    loadings = evecs[:, :a].copy()
    pivots = np.argmax(np.abs(loadings), axis=0)
    signs = np.sign(loadings[pivots, np.arange(a)])
    signs[signs == 0] = 1.0
    loadings *= signs
    eigenvalues = spectrum[:a].copy()
    model = PcaModel(
        preprocess=preprocess,
        loadings=loadings,
        eigenvalues=eigenvalues,
        scores_cov=np.diag(eigenvalues) / (acc.n - 1),
        captured_variance_fraction=float(eigenvalues.sum() / total),
        total_variance=total,
        n_calibration=acc.n,
        spectrum=spectrum,
        feature_names=tuple(feature_names),
    )
    logger.info(
        "pca_fit",
        n=acc.n,
        features=acc.n_features,
        components=a,
        rank=rank,
        captured=round(model.captured_variance_fraction, 6),
    )
    return model


def calibrate_passes(
    passes: Callable[[], Iterable[np.ndarray]],
    policy: ComponentPolicy,
    weights: Sequence[float] | np.ndarray | None = None,
    autoscale: bool = True,
    feature_names: Sequence[str] = (),
) -> PcaModel:
    """
    Both passes, each over a fresh chunk iterator from passes().

    The calibration rows only ever exist one chunk at a time, so they can stream from disk.
    """
    params = fit_preprocess(passes(), weights, autoscale)
    acc = CrossProductAccumulator.empty(params.n_features)
    for chunk in passes():
        acc = accumulate(acc, apply_preprocess(chunk, params))
    return fit_pca(acc, policy, params, feature_names)


def calibrate(
    counts: np.ndarray,
    policy: ComponentPolicy,
    weights: Sequence[float] | np.ndarray | None = None,
    autoscale: bool = True,
    chunk_rows: int = DEFAULT_CHUNK_ROWS,
    feature_names: Sequence[str] = (),
) -> PcaModel:
    """Both passes over an in-memory count matrix, chunk by chunk."""
    x = np.asarray(counts, dtype=np.float64)
    if x.ndim != 2:
        raise DataError("calibration data must be a 2-D matrix")
    return calibrate_passes(lambda: iter_chunks(x, chunk_rows), policy, weights, autoscale, feature_names)


def project(x: np.ndarray, model: PcaModel) -> np.ndarray:
    """Scores (row @ loadings) for one preprocessed row or a block of rows."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.shape[-1] != model.n_features:
        raise DataError(f"row has {arr.shape[-1]} features, model expects {model.n_features}")
    return arr @ model.loadings


def residual(x: np.ndarray, t: np.ndarray, model: PcaModel) -> np.ndarray:
    """Residuals: preprocessed row minus its reconstruction from the scores."""
    arr = np.asarray(x, dtype=np.float64)
    scores = np.asarray(t, dtype=np.float64)
    if arr.shape[-1] != model.n_features or scores.shape[-1] != model.n_components:
        raise DataError("row or score dimensions do not match the model")
    return arr - scores @ model.loadings.T
