"""Experiment harness: configs, runs, sweeps and the CLI."""

from vfl_shield.harness.config import (
    AttackConfig,
    DatasetConfig,
    ExperimentConfig,
    ModelConfig,
    PartitionConfig,
    TrainingConfig,
    config_from_dict,
    config_hash,
    load_config,
)
from vfl_shield.harness.experiment import emit_pd_matrix, execute, run_experiment
from vfl_shield.harness.metrics import METRIC_COLUMNS, MetricsRow, summarize
from vfl_shield.harness.sweep import expand_grid, load_grid, run_sweep

__all__ = [
    "AttackConfig",
    "DatasetConfig",
    "ExperimentConfig",
    "METRIC_COLUMNS",
    "MetricsRow",
    "ModelConfig",
    "PartitionConfig",
    "TrainingConfig",
    "config_from_dict",
    "config_hash",
    "emit_pd_matrix",
    "execute",
    "expand_grid",
    "load_config",
    "load_grid",
    "run_experiment",
    "run_sweep",
    "summarize",
]
