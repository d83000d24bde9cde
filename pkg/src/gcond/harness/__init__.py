"""Experiment runner, telemetry, plots and command line."""

from gcond.harness.config import ExperimentConfig, load_config
from gcond.harness.runner import StepRecord, compare_methods, run_experiment, run_method

__all__ = [
    "ExperimentConfig",
    "StepRecord",
    "compare_methods",
    "load_config",
    "run_experiment",
    "run_method",
]
