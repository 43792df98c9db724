from mbda.monitor.clustering import ClusterPoint, cluster_plot
from mbda.monitor.phase1 import VarianceComparison, phase1_variance_check
from mbda.monitor.statistics import (
    ControlLimits,
    MonitorRecord,
    Phase,
    compute_ucl,
    control_limits,
    d_statistic,
    monitor_matrix,
    monitor_records,
    phase_alpha,
    q_statistic,
    tscore,
    tscores,
)
from mbda.monitor.triage import AnomalyWindow, triage

__all__ = [
    "AnomalyWindow",
    "ClusterPoint",
    "ControlLimits",
    "MonitorRecord",
    "Phase",
    "VarianceComparison",
    "cluster_plot",
    "compute_ucl",
    "control_limits",
    "d_statistic",
    "monitor_matrix",
    "monitor_records",
    "phase1_variance_check",
    "phase_alpha",
    "q_statistic",
    "triage",
    "tscore",
    "tscores",
]
