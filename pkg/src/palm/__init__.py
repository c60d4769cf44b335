"""Evolving hyperplane-based neuro-fuzzy regression for data streams."""

from .datastreams import Dataset, DatasetError, DatasetSpec, LagInput, gen_mackey_glass, gen_nonlinear_sysid
from .engine import ConfigError, ModelConfig, Palm, RunTrace, SnapshotError, predict_stream, train_stream
from .inference import (
    DimensionError,
    EmptyRuleBaseError,
    Hyperplane,
    IntervalHyperplane,
    NumericDomainError,
    PalmError,
    RuleBase,
    StreamSample,
)
from .metrics import MetricReport, compute_metrics, experiment_suite, run_experiment, sensitivity_sweep

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "Dataset", "DatasetError", "DatasetSpec", "DimensionError", "EmptyRuleBaseError",
    "Hyperplane", "IntervalHyperplane", "LagInput", "MetricReport", "ModelConfig", "NumericDomainError",
    "Palm", "PalmError", "RuleBase", "RunTrace", "SnapshotError", "StreamSample", "compute_metrics",
    "experiment_suite", "gen_mackey_glass", "gen_nonlinear_sysid", "predict_stream", "run_experiment",
    "sensitivity_sweep", "train_stream",
]
