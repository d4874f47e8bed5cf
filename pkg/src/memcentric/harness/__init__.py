"""Experiment harness: config parsing, traces, attacks, runners and reports."""

from .attacks import AttackPlan, AttackResult, plan_attack, run_attack
from .config import ExperimentConfig, build_config, parse_config
from .report import InvariantViolation, MetricsReport, Table, emit
from .runner import build_device, run
from .trace import TraceRecord, parse_trace, read_trace, uniform_workload, write_trace

__all__ = [
    "AttackPlan", "AttackResult", "ExperimentConfig", "InvariantViolation", "MetricsReport", "Table",
    "TraceRecord", "build_config", "build_device", "emit", "parse_config", "parse_trace",
    "plan_attack", "read_trace", "run", "run_attack", "uniform_workload", "write_trace",
]
