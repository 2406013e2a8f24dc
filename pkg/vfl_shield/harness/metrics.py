"""Metric rows written to ``metrics.csv`` and their summaries."""

import math
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Sequence

import pandas as pd

from vfl_shield.errors import ContractError

SCHEMA_VERSION = 1

METRIC_COLUMNS = [
    "schema_version",
    "config_hash",
    "seed",
    "epoch",
    "stage",
    "main_accuracy",
    "backdoor_accuracy",
    "label_recovery_rate",
    "d_final",
]
VALUE_COLUMNS = ["main_accuracy", "backdoor_accuracy", "label_recovery_rate", "d_final"]
STAGES = ("epoch", "final", "attack")


@dataclass
class MetricsRow:
    """One line of metrics.

    ``wall_time_s`` is kept out of the CSV so reruns stay byte-identical;
    it goes to the manifest instead.
    """

    config_hash: str
    seed: int
    epoch: int
    stage: str
    main_accuracy: float = math.nan
    backdoor_accuracy: float = math.nan
    label_recovery_rate: float = math.nan
    d_final: float = math.nan
    wall_time_s: float = 0.0

    def __post_init__(self):
        if self.stage not in STAGES:
            raise ContractError(f"unknown stage {self.stage!r}")
        for name in ("main_accuracy", "backdoor_accuracy", "label_recovery_rate"):
            value = getattr(self, name)
            if not math.isnan(value) and not 0.0 <= value <= 1.0:
                raise ContractError(f"{name}={value} outside [0, 1]")

    def to_dict(self) -> Dict[str, Any]:
        """CSV record in ``METRIC_COLUMNS`` order."""
        data = asdict(self)
        data["schema_version"] = SCHEMA_VERSION
        return {col: data[col] for col in METRIC_COLUMNS}


def rows_to_frame(rows: Sequence[MetricsRow]) -> pd.DataFrame:
    """DataFrame with the fixed metric columns."""
    return pd.DataFrame([r.to_dict() for r in rows], columns=METRIC_COLUMNS)


def summarize(df: pd.DataFrame, group_cols: List[str]) -> pd.DataFrame:
    """Mean and standard deviation of the metric columns per group.

    Args:
        df: Metric records, typically final and attack rows of a sweep.
        group_cols: Columns identifying a grid point.

    Returns:
        One row per group with ``<metric>_mean``, ``<metric>_std`` and ``runs``.
    """
    if df.empty:
        return pd.DataFrame(columns=group_cols)
    grouped = df.groupby(group_cols, sort=False, dropna=False)
    stats = grouped[VALUE_COLUMNS].agg(["mean", "std"])
    stats.columns = [f"{col}_{stat}" for col, stat in stats.columns]
    stats["runs"] = grouped.size()
    return stats.reset_index()
