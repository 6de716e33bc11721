"""Offline analysis: reach envelope, reward scaling, metrics, statistics, reports."""
from .envelope import EnvelopeCloud, TargetCheck, check_targets, reach_envelope, whac_targets
from .metrics import MetricsError, RoundMetrics, metrics_from_log, metrics_from_records, read_records, round_from_record
from .report import build_report, fatigue_comparisons, write_report
from .reward_scale import SCENARIOS, ScaleReport, ScalingScenario, hammer_path, reward_scale_report
from .stats import KsResult, WilcoxonResult, ks_normality_test, wilcoxon_signed_rank

__all__ = [name for name in dir() if not name.startswith("_")]
