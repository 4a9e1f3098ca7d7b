"""Baselines, experiment runner, run metrics and comparison reports."""

from .baselines import (
    BASELINE_KINDS,
    OracleGreedyAgent,
    RandomAgent,
    StaticAgent,
    ThresholdAgent,
    default_rules,
    make_agent,
    make_baseline,
)
from .compare import CompareError, PairedDiff, Report, compare, load_summaries
from .experiment import (
    OUTPUT_ROOT_ENV,
    Arm,
    ConfigError,
    ExperimentConfig,
    load_config,
    parse_config,
    run_experiment,
)
from .metrics import NOT_RECOVERED, RunSummary, fulfillment_from_csv, recovery_time, summarize

__all__ = [
    "Arm",
    "BASELINE_KINDS",
    "CompareError",
    "ConfigError",
    "ExperimentConfig",
    "NOT_RECOVERED",
    "OUTPUT_ROOT_ENV",
    "OracleGreedyAgent",
    "PairedDiff",
    "RandomAgent",
    "Report",
    "RunSummary",
    "StaticAgent",
    "ThresholdAgent",
    "compare",
    "default_rules",
    "fulfillment_from_csv",
    "load_config",
    "load_summaries",
    "make_agent",
    "make_baseline",
    "parse_config",
    "recovery_time",
    "run_experiment",
    "summarize",
]
