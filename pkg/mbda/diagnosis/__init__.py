"""Steps 4 and 5: which features explain an anomaly, and which raw lines carry them."""

from mbda.diagnosis.contributions import (
    ContributionVector,
    SelectedFeatures,
    select_features,
    us_contributions,
    window_contributions,
)
from mbda.diagnosis.deparse import DeparseResult, ScoredLine, deparse, extract_levels, fscore

__all__ = [
    "ContributionVector",
    "DeparseResult",
    "ScoredLine",
    "SelectedFeatures",
    "deparse",
    "extract_levels",
    "fscore",
    "select_features",
    "us_contributions",
    "window_contributions",
]
