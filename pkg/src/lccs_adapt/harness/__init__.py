"""Experiment orchestration, metrics, reports and timing."""

from .experiment import ExperimentRunner, run_experiment
from .metrics import compute_metrics
from .report import aggregate_records, emit_report, load_report
from .timing import bench_time

__all__ = [
    "ExperimentRunner",
    "aggregate_records",
    "bench_time",
    "compute_metrics",
    "emit_report",
    "load_report",
    "run_experiment",
]
