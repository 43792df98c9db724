"""Pydantic schemas for pipeline config validation."""

from __future__ import annotations

import re
from datetime import timedelta, timezone
from functools import lru_cache

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from mbda.constants import (
    DEFAULT_MAX_CLUSTERS,
    DEFAULT_POLLUTION_THRESHOLD,
    DEFAULT_RELATIVE_SELECTION,
    DEFAULT_UCL_PERCENTILE,
    DEFAULT_VARIANCE_FRACTION,
)

_OFFSET_PATTERN = re.compile(r"^([+-])(\d{2}):?(\d{2})$")


@lru_cache(maxsize=None)
def compile_pattern(pattern: str) -> re.Pattern[str]:
    """Compile once per process; specs are shared across workers by value."""
    return re.compile(pattern)


class FeatureSpec(BaseModel):
    """One feature-as-a-counter: a regex whose matches are counted per interval."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    name: str = Field(..., min_length=1, description="Identifier, unique within its source")
    pattern: str = Field(..., description="Regular expression over a raw log line")
    weight: float = Field(1.0, ge=1, le=10, description="Severity weight applied after auto-scaling")

    @field_validator("pattern")
    @classmethod
    def _pattern_compiles(cls, v: str) -> str:
        try:
            compile_pattern(v)
        except re.error as e:
            raise ValueError(f"invalid regular expression {v!r}: {e}") from e
        return v

    @property
    def regex(self) -> re.Pattern[str]:
        return compile_pattern(self.pattern)


class SourceSpec(BaseModel):
    """One log source: how to find timestamps and which features to count."""

    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)

    name: str = Field(..., min_length=1)
    interval_seconds: int = Field(..., alias="interval", ge=1, description="Native sampling interval")
    timestamp_pattern: str = Field(..., description="Regex with exactly one capture group isolating the timestamp")
    timestamp_format: str = Field(..., description="strptime format for the captured text")
    utc_offset: str | None = Field(None, description="Offset for zone-less timestamps, e.g. +02:00; UTC when unset")
    files: list[str] = Field(default_factory=list, description="Glob patterns for this source's raw inputs")
    encoding: str = "utf-8"
    features: list[FeatureSpec] = Field(..., min_length=1)

    @field_validator("timestamp_pattern")
    @classmethod
    def _one_group(cls, v: str) -> str:
        try:
            rx = compile_pattern(v)
        except re.error as e:
            raise ValueError(f"invalid timestamp_pattern {v!r}: {e}") from e
        if rx.groups != 1:
            raise ValueError(f"timestamp_pattern must have exactly one capture group, found {rx.groups}")
        return v

    @field_validator("utc_offset")
    @classmethod
    def _offset_format(cls, v: str | None) -> str | None:
        if v is not None and not _OFFSET_PATTERN.match(v):
            raise ValueError(f"utc_offset must look like +02:00 or -0530, got {v!r}")
        return v

    @model_validator(mode="after")
    def _unique_feature_names(self) -> SourceSpec:
        seen: set[str] = set()
        for i, f in enumerate(self.features):
            if f.name in seen:
                raise ValueError(f"source {self.name!r}: duplicate feature name {f.name!r} at position {i}")
            seen.add(f.name)
        return self

    @property
    def timestamp_regex(self) -> re.Pattern[str]:
        return compile_pattern(self.timestamp_pattern)

    @property
    def tzinfo(self) -> timezone:
        if not self.utc_offset:
            return timezone.utc
        m = _OFFSET_PATTERN.match(self.utc_offset)
        assert m is not None
        sign = -1 if m.group(1) == "-" else 1
        return timezone(sign * timedelta(hours=int(m.group(2)), minutes=int(m.group(3))))

    @property
    def feature_names(self) -> list[str]:
        return [f.name for f in self.features]


class ComponentPolicy(BaseModel):
    """How many principal components to keep: a fixed A or a captured-variance fraction."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    fixed: int | None = Field(None, ge=1)
    variance_fraction: float | None = Field(None, gt=0, le=1)

    @model_validator(mode="after")
    def _exactly_one(self) -> ComponentPolicy:
        if (self.fixed is None) == (self.variance_fraction is None):
            raise ValueError("components must set exactly one of 'fixed' or 'variance_fraction'")
        return self


class FeatureSelectionPolicy(BaseModel):
    """Which US contributions make it into F: relative to the largest, or the top k."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    relative: float | None = Field(None, gt=0, le=1)
    top_k: int | None = Field(None, ge=1)

    @model_validator(mode="after")
    def _exactly_one(self) -> FeatureSelectionPolicy:
        if (self.relative is None) == (self.top_k is None):
            raise ValueError("feature_selection must set exactly one of 'relative' or 'top_k'")
        return self


class PreprocessingConfig(BaseModel):
    """Centering is always applied; auto-scaling can be switched off (sigma = 1)."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    autoscale: bool = True


class PipelineConfig(BaseModel):
    """Root config: sources, common sampling rate, detection and diagnosis knobs."""

    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)

    common_interval_seconds: int = Field(..., alias="common_interval", ge=1)
    ucl_percentile: float = Field(DEFAULT_UCL_PERCENTILE, gt=0, lt=1)
    component_policy: ComponentPolicy = Field(
        default_factory=lambda: ComponentPolicy(variance_fraction=DEFAULT_VARIANCE_FRACTION),
        alias="components",
    )
    deparse_threshold: int = Field(500, ge=1, description="Max retrieved lines per source")
    feature_selection: FeatureSelectionPolicy = Field(
        default_factory=lambda: FeatureSelectionPolicy(relative=DEFAULT_RELATIVE_SELECTION)
    )
    preprocessing: PreprocessingConfig = Field(default_factory=PreprocessingConfig)
    max_clusters: int = Field(DEFAULT_MAX_CLUSTERS, ge=1)
    cluster_member_cap: int = Field(1, ge=0, description="Keep member timestamps for clusters up to this size")
    coalesce_windows: bool = True
    coalesce_threshold: float = Field(1.0, ge=0, description="Tscore above which consecutive intervals merge")
    pollution_threshold: float = Field(DEFAULT_POLLUTION_THRESHOLD, gt=0)
    top_k: int = Field(5, ge=1)
    workers: int = Field(1, ge=1)
    sources: list[SourceSpec] = Field(..., min_length=1)

    @model_validator(mode="after")
    def _check_sources(self) -> PipelineConfig:
        seen: set[str] = set()
        for i, s in enumerate(self.sources):
            if s.name in seen:
                raise ValueError(f"duplicate source name {s.name!r} at position {i}")
            seen.add(s.name)
            if self.common_interval_seconds % s.interval_seconds != 0:
                raise ValueError(
                    f"source {s.name!r}: common interval not an integer multiple "
                    f"({self.common_interval_seconds} s vs source interval {s.interval_seconds} s)"
                )
        return self

    def source(self, name: str) -> SourceSpec:
        for s in self.sources:
            if s.name == name:
                return s
        raise KeyError(name)

    @property
    def qualified_feature_names(self) -> list[str]:
        """Fused column order: source order, then declaration order."""
        return [f"{s.name}.{f.name}" for s in self.sources for f in s.features]

    @property
    def weights(self) -> list[float]:
        return [f.weight for s in self.sources for f in s.features]

    @property
    def n_features(self) -> int:
        return sum(len(s.features) for s in self.sources)
