"""Grid sweeps over experiment configs with repeated seeds."""

from __future__ import annotations

import copy
import itertools
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import pandas as pd
from tqdm import tqdm

from vfl_shield.errors import ConfigError
from vfl_shield.harness.config import ExperimentConfig, config_from_dict, set_path
from vfl_shield.harness.experiment import METRICS_FILE, execute, update_manifest
from vfl_shield.harness.metrics import METRIC_COLUMNS, summarize
from vfl_shield.storage.csv_storage import CSVStorage

logger = logging.getLogger(__name__)

SUMMARY_FILE = "summary.csv"
POINTS_FILE = "sweep_points.csv"
POINT_COLUMNS = ["grid_point", "repeat", "seed", "config_hash", "values"]
SUMMARY_STAGES = ("final", "attack")


@dataclass
class SweepTask:
    """One (grid point, repeat) run."""

    point: int
    repeat: int
    values: Dict[str, Any]
    config: Dict[str, Any]
    seed: int


def load_grid(path: Union[str, Path]) -> Dict[str, List[Any]]:
    """Read a JSON grid of dotted paths to value lists.

    Scalars become one-element lists.

    Raises:
        ConfigError: If the file is missing or not a JSON object.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"grid file {path} does not exist")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must hold an object of dotted paths")
    return {k: v if isinstance(v, list) else [v] for k, v in data.items()}


def expand_grid(grid: Dict[str, Sequence[Any]]) -> List[Dict[str, Any]]:
    """Cartesian product of the grid, keys varying slowest first.

    Raises:
        ConfigError: If the grid or any of its value lists is empty.
    """
    if not grid:
        raise ConfigError("sweep grid is empty")
    for key, values in grid.items():
        if len(values) == 0:
            raise ConfigError("has no values", key)
    keys = list(grid)
    combos = itertools.product(*(grid[k] for k in keys))
    return [dict(zip(keys, combo)) for combo in combos]


def plan_sweep(
    base: ExperimentConfig,
    grid: Dict[str, Sequence[Any]],
    repeats: Optional[int] = None,
) -> List[SweepTask]:
    """Validate every grid point and list the runs.

    Run ``r`` of point ``i`` uses seed ``base.seed + i * repeats + r``, so
    every run of the sweep gets its own seed.

    Raises:
        ConfigError: If any point names an unknown field or fails validation.
    """
    repeats = base.repeats if repeats is None else repeats
    if repeats < 1:
        raise ConfigError("must be positive", "repeats")
    base_dict = base.to_dict()
    tasks = []
    for index, values in enumerate(expand_grid(grid)):
        data = copy.deepcopy(base_dict)
        for key, value in values.items():
            set_path(data, key, value)
        config_from_dict(data, check_files=index == 0)
        for r in range(repeats):
            seed = base.seed + index * repeats + r
            tasks.append(SweepTask(index, r, values, data, seed))
    return tasks


def _run_task(task: SweepTask) -> Tuple[List[Dict[str, Any]], Dict[str, Any]]:
    config = config_from_dict(task.config, check_files=False).with_seed(task.seed)
    outcome = execute(config)
    return [row.to_dict() for row in outcome.rows], outcome.manifest


def _grid_cell(value: Any) -> Any:
    if isinstance(value, (list, dict)):
        return json.dumps(value, sort_keys=True)
    return value


def run_sweep(
    base: ExperimentConfig,
    grid: Dict[str, Sequence[Any]],
    repeats: Optional[int] = None,
    out_dir: Optional[Union[str, Path]] = None,
    workers: int = 1,
    show_progress: bool = False,
) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """Run every grid point ``repeats`` times.

    Runs may execute in worker processes; results are collected in task
    order and written by this process only.

    Args:
        base: Config every point starts from.
        grid: Dotted config paths to the values to try.
        repeats: Runs per point; ``base.repeats`` if omitted.
        out_dir: Where ``metrics.csv``, ``sweep_points.csv``,
            ``summary.csv`` and ``manifest.json`` go. ``metrics.csv`` keeps
            the plain run schema so runs and sweeps can share a directory;
            ``sweep_points.csv`` maps each (config hash, seed) to its grid
            values.
        workers: Process count.
        show_progress: Display a progress bar.

    Returns:
        All metric rows with one column per grid key, and the mean/std
        summary of final and attack rows per grid point.
    """
    tasks = plan_sweep(base, grid, repeats)
    keys = list(grid)
    logger.info("sweep over %s: %d runs", ", ".join(keys), len(tasks))
    progress = tqdm(total=len(tasks), desc="sweep", disable=not show_progress)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = []
            for result in pool.map(_run_task, tasks):
                results.append(result)
                progress.update(1)
    else:
        results = []
        for task in tasks:
            results.append(_run_task(task))
            progress.update(1)
    progress.close()

    records = []
    points = []
    manifests = []
    for task, (rows, manifest) in zip(tasks, results):
        cells = {k: _grid_cell(task.values[k]) for k in keys}
        records.extend({**row, **cells} for row in rows)
        points.append(
            {
                "grid_point": task.point,
                "repeat": task.repeat,
                "seed": task.seed,
                "config_hash": manifest["config_hash"],
                "values": json.dumps(task.values, sort_keys=True),
            }
        )
        manifests.append(
            {
                **manifest,
                "grid_point": task.point,
                "repeat": task.repeat,
                "values": task.values,
            }
        )
    metrics = pd.DataFrame(records, columns=METRIC_COLUMNS + keys)
    final = metrics[metrics["stage"].isin(SUMMARY_STAGES)]
    summary = summarize(final, keys + ["stage"])

    if out_dir is not None:
        storage = CSVStorage(out_dir)
        storage.append_rows(records, METRICS_FILE, METRIC_COLUMNS)
        storage.append_rows(points, POINTS_FILE, POINT_COLUMNS)
        storage.save(summary, SUMMARY_FILE)
        update_manifest(storage, manifests, grid={k: list(v) for k, v in grid.items()})
    return metrics, summary
