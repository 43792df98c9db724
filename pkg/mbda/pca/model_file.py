"""
Model file: everything monitoring and diagnosis need, as one JSON document.

Floats are written with their shortest round-trip repr, so a reloaded model gives bit-identical
statistics.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from mbda import __version__
from mbda.constants import MODEL_FORMAT
from mbda.errors import ModelError
from mbda.monitor.statistics import ControlLimits
from mbda.pca.core import PcaModel, PreprocessParams

logger = structlog.get_logger(__name__)


class LimitsDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")

    ucl_d: float = Field(..., gt=0)
    ucl_q: float = Field(..., gt=0)
    percentile: float
    n_calibration: int


class ModelDocument(BaseModel):
    """On-disk schema of a calibrated model."""

    model_config = ConfigDict(extra="forbid")

    format: str = MODEL_FORMAT
    tool_version: str = __version__
    config_digest: str
    feature_names: list[str]
    mean: list[float]
    scale: list[float]
    weight: list[float]
    autoscale: bool = True
    loadings: list[list[float]] = Field(..., description="M rows of A loadings")
    eigenvalues: list[float]
    spectrum: list[float] = Field(..., description="All M eigenvalues, descending")
    scores_cov: list[list[float]]
    captured_variance_fraction: float
    total_variance: float
    n_calibration: int
    limits: LimitsDocument

    @model_validator(mode="after")
    def _shapes(self) -> ModelDocument:
        if self.format != MODEL_FORMAT:
            raise ValueError(f"unsupported model format {self.format!r}, expected {MODEL_FORMAT!r}")
        m = len(self.feature_names)
        a = len(self.eigenvalues)
        if not (len(self.mean) == len(self.scale) == len(self.weight) == len(self.spectrum) == m):
            raise ValueError("preprocessing vectors and spectrum must have one entry per feature")
        if len(self.loadings) != m or any(len(row) != a for row in self.loadings):
            raise ValueError(f"loadings must be {m} x {a}")
        if len(self.scores_cov) != a or any(len(row) != a for row in self.scores_cov):
            raise ValueError(f"scores_cov must be {a} x {a}")
        return self


def model_document(model: PcaModel, limits: ControlLimits, config_digest: str, autoscale: bool) -> ModelDocument:
    p = model.preprocess
    return ModelDocument(
        config_digest=config_digest,
        feature_names=list(model.feature_names),
        mean=p.mean.tolist(),
        scale=p.scale.tolist(),
        weight=p.weight.tolist(),
        autoscale=autoscale,
        loadings=model.loadings.tolist(),
        eigenvalues=model.eigenvalues.tolist(),
        spectrum=model.spectrum.tolist(),
        scores_cov=model.scores_cov.tolist(),
        captured_variance_fraction=model.captured_variance_fraction,
        total_variance=model.total_variance,
        n_calibration=model.n_calibration,
        limits=LimitsDocument(
            ucl_d=limits.ucl_d,
            ucl_q=limits.ucl_q,
            percentile=limits.percentile,
            n_calibration=limits.n_calibration,
        ),
    )


def save_model(
    path: str | Path,
    model: PcaModel,
    limits: ControlLimits,
    config_digest: str,
    autoscale: bool = True,
) -> None:
    doc = model_document(model, limits, config_digest, autoscale)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(doc.model_dump(mode="json"), indent=2) + "\n", encoding="utf-8")
    logger.info("model_saved", path=str(path), components=model.n_components, features=model.n_features)


def load_model(path: str | Path) -> tuple[PcaModel, ControlLimits, ModelDocument]:
    """
    Read a model file back into a PcaModel and its control limits.

    Raises:
        ModelError: Unreadable file, unknown format tag or inconsistent shapes.
    """
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ModelError(f"cannot read model file {path}: {e}") from e
    try:
        doc = ModelDocument.model_validate(data)
    except ValidationError as e:
        raise ModelError(f"invalid model file {path}: {e.errors()[0]['msg']}") from e
    a = len(doc.eigenvalues)
    m = len(doc.feature_names)
    model = PcaModel(
        preprocess=PreprocessParams(
            mean=np.asarray(doc.mean), scale=np.asarray(doc.scale), weight=np.asarray(doc.weight)
        ),
        loadings=np.asarray(doc.loadings, dtype=np.float64).reshape(m, a),
        eigenvalues=np.asarray(doc.eigenvalues, dtype=np.float64),
        scores_cov=np.asarray(doc.scores_cov, dtype=np.float64).reshape(a, a),
        captured_variance_fraction=doc.captured_variance_fraction,
        total_variance=doc.total_variance,
        n_calibration=doc.n_calibration,
        spectrum=np.asarray(doc.spectrum, dtype=np.float64),
        feature_names=tuple(doc.feature_names),
    )
    limits = ControlLimits(doc.limits.ucl_d, doc.limits.ucl_q, doc.limits.percentile, doc.limits.n_calibration)
    return model, limits, doc
