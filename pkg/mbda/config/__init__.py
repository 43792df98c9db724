"""Configuration loading and validation."""

from mbda.config.loader import config_digest, load_config, load_config_file
from mbda.config.schemas import FeatureSpec, PipelineConfig, SourceSpec

__all__ = ["FeatureSpec", "PipelineConfig", "SourceSpec", "config_digest", "load_config", "load_config_file"]
