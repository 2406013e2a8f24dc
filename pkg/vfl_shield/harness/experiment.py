"""End-to-end experiment runs: data, parties, attack, defense, metrics."""

from __future__ import annotations

import logging
import os
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from vfl_shield.attacks.base_attack import PassiveAttack
from vfl_shield.attacks.gradient_replacement import (
    GradientReplacementBackdoor,
    GrBackdoorConfig,
    LabelReplacementAttack,
    active_label_poison,
)
from vfl_shield.attacks.label_inference import infer_labels, recovery_rate
from vfl_shield.data.dataset import Dataset, subsample
from vfl_shield.data.mnist import load_mnist_split
from vfl_shield.data.partition import PartitionSpec, vertical_split
from vfl_shield.data.synthetic import blob_splits
from vfl_shield.data.triggers import (
    TriggerSpec,
    apply_trigger,
    distributed_triggers,
    mnist_trigger,
    select_poison,
    select_targets,
)
from vfl_shield.defenses.base_defense import BaseDefense
from vfl_shield.defenses.coae import CoaeDefense
from vfl_shield.defenses.config import build_defense
from vfl_shield.defenses.pd_matrix import PdMatrix, pd_matrix
from vfl_shield.errors import (
    ConfigError,
    DivergedError,
    ExperimentError,
    VflShieldError,
)
from vfl_shield.harness.config import ExperimentConfig, config_hash
from vfl_shield.harness.metrics import METRIC_COLUMNS, MetricsRow
from vfl_shield.numerics.mlp import Mlp
from vfl_shield.protocol.parties import ActiveParty, PassiveParty, party_indices
from vfl_shield.protocol.session import VflSession
from vfl_shield.storage.csv_storage import CSVStorage

logger = logging.getLogger(__name__)

METRICS_FILE = "metrics.csv"
MANIFEST_FILE = "manifest.json"
PD_MATRIX_FILE = "pd_matrix.csv"

BACKDOOR_ATTACKS = ("grad_replacement", "label_replacement", "active_poison")


@dataclass
class ExperimentData:
    """Datasets and sample sets of one run."""

    train: Dataset
    test: Dataset
    partition: PartitionSpec
    train_labels: np.ndarray
    target_ids: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    backdoor_ids: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))


@dataclass
class RunOutcome:
    """Everything a run produces."""

    rows: List[MetricsRow]
    manifest: Dict[str, Any]
    true_labels: np.ndarray
    restored_labels: np.ndarray
    num_classes: int


@contextmanager
def _stage(config: ExperimentConfig, path: str) -> Iterator[None]:
    """Re-raise library errors with the config section that caused them."""
    try:
        yield
    except (ExperimentError, ConfigError):
        raise
    except (VflShieldError, FileNotFoundError) as exc:
        raise ExperimentError(f"{config.name} [{path}]: {exc}") from exc


def load_datasets(config: ExperimentConfig) -> Tuple[Dataset, Dataset]:
    """Train and test splits for the configured dataset."""
    ds = config.dataset
    if ds.name == "blobs":
        train, test = blob_splits(
            ds.num_classes,
            ds.num_features,
            ds.n_per_class,
            ds.spread,
            ds.seed,
            ds.test_fraction,
        )
    else:
        train = load_mnist_split("train", ds.data_dir)
        test = load_mnist_split("test", ds.data_dir)
    if ds.train_size is not None:
        train = subsample(train, ds.train_size, ds.seed)
    if ds.test_size is not None:
        test = subsample(test, ds.test_size, ds.seed + 1)
    return train, test


def make_partition(config: ExperimentConfig, dataset: Dataset) -> PartitionSpec:
    """Column strips for images, contiguous blocks otherwise."""
    kind = config.partition.kind
    k = config.partition.num_parties
    if kind == "auto":
        kind = "image_columns" if dataset.image_shape is not None else "even"
    if kind == "image_columns":
        if dataset.image_shape is None:
            raise ConfigError(
                "image partitions need an image dataset", "partition.kind"
            )
        return PartitionSpec.image_columns(*dataset.image_shape, k)
    return PartitionSpec.even(dataset.num_features, k)


def attacker_index(config: ExperimentConfig) -> int:
    """Attacking passive party (the last one by default)."""
    if config.attack.attacker is not None:
        return config.attack.attacker
    return config.partition.num_parties - 2


def make_triggers(
    config: ExperimentConfig, dataset: Dataset, partition: PartitionSpec
) -> List[TriggerSpec]:
    """Trigger pieces, each owned by the party that stamps it."""
    atk = config.attack
    passive = list(range(partition.num_parties - 1))
    owner = None if atk.kind == "active_poison" else attacker_index(config)
    if dataset.image_shape is not None:
        if atk.distributed:
            if partition.num_parties != 4:
                raise ConfigError(
                    "the split image trigger needs four parties",
                    "partition.num_parties",
                )
            return distributed_triggers(passive)
        return [mnist_trigger(owner)]
    # tabular data: the last feature of each owning party's block
    owners = passive if atk.distributed else [owner]
    return [
        TriggerSpec(
            "feature",
            (int(partition.columns[p if p is not None else passive[-1]].max()),),
            (1.0,),
            p,
        )
        for p in owners
    ]


def prepare_data(config: ExperimentConfig, seed: int) -> ExperimentData:
    """Load, partition and (for backdoor attacks) trigger the data."""
    train, test = load_datasets(config)
    partition = make_partition(config, train)
    atk = config.attack
    data = ExperimentData(train, test, partition, train.labels.copy())
    if atk.kind not in BACKDOOR_ATTACKS:
        return data
    tau = atk.target_label
    if not 0 <= tau < train.num_classes:
        raise ConfigError(
            f"must lie in [0, {train.num_classes})", "attack.target_label"
        )
    targets = np.zeros(0, np.int64)
    if atk.kind == "grad_replacement":
        targets = select_targets(train, tau, atk.num_targets, seed)
    backdoor = select_poison(
        train, atk.poison_train, seed, exclude_label=tau, exclude_ids=targets
    )
    test_poison = select_poison(test, atk.poison_test, seed + 1, exclude_label=tau)
    for trigger in make_triggers(config, train, partition):
        train = apply_trigger(train, trigger, backdoor, partition)
        test = apply_trigger(test, trigger, test_poison, partition)
    labels = train.labels.copy()
    if atk.kind == "active_poison":
        labels = active_label_poison(labels, backdoor, tau)
    logger.info(
        "marked %d/%d train and %d/%d test samples with the trigger",
        backdoor.size,
        train.num_samples,
        test_poison.size,
        test.num_samples,
    )
    return ExperimentData(train, test, partition, labels, targets, backdoor)


def make_attacks(
    config: ExperimentConfig, data: ExperimentData, seed: int
) -> Dict[int, PassiveAttack]:
    """Attack hook per attacking passive party index."""
    atk = config.attack
    if atk.kind == "grad_replacement":
        gr_config = GrBackdoorConfig(
            target_label=atk.target_label,
            target_ids=data.target_ids,
            backdoor_ids=data.backdoor_ids,
            gamma=atk.gamma,
            random_h=atk.random_h,
        )
        attackers = (
            range(config.partition.num_parties - 1)
            if atk.distributed
            else [attacker_index(config)]
        )
        return {p: GradientReplacementBackdoor(gr_config, seed=seed) for p in attackers}
    if atk.kind == "label_replacement":
        known = {int(i): int(data.train_labels[i]) for i in data.backdoor_ids}
        return {attacker_index(config): LabelReplacementAttack(atk.target_label, known)}
    return {}


def build_session(
    config: ExperimentConfig,
    data: ExperimentData,
    defense: BaseDefense,
    attacks: Dict[int, PassiveAttack],
    seed: int,
) -> VflSession:
    """Parties with freshly initialized bottom models, passive first."""
    rng = np.random.default_rng(seed)
    views = vertical_split(data.train, data.partition)
    num_classes = data.train.num_classes
    models = [
        Mlp.create([width, *config.model.hidden, num_classes], rng)
        for width in data.partition.widths
    ]
    k = data.partition.num_parties
    passive = [
        PassiveParty(i, models[i], views[i], attack=attacks.get(i))
        for i in range(k - 1)
    ]
    active = ActiveParty(k - 1, models[k - 1], views[k - 1], data.train_labels, defense)
    return VflSession(
        passive,
        active,
        batch_size=config.training.batch_size,
        lr=config.lr,
        epochs=config.epochs,
        seed=seed,
    )


def run_label_inference(
    config: ExperimentConfig, session: VflSession, data: ExperimentData, seed: int
) -> Tuple[np.ndarray, np.ndarray, List[float]]:
    """Attack frozen rounds of the current snapshot.

    Returns:
        True labels, restored labels and the final distance of every
        attacked round.
    """
    atk = config.attack
    attacker = session.passive[attacker_index(config)]
    rng = np.random.default_rng([seed, 2])
    truth: List[int] = []
    restored: List[int] = []
    distances: List[float] = []
    for r in range(atk.rounds):
        batch = rng.choice(session.num_samples, size=atk.batch_size, replace=False)
        observed = session.round(batch, apply_updates=False).gradients[attacker.index]
        try:
            result = infer_labels(
                observed,
                attacker.model,
                attacker.features[batch],
                iters=atk.iters,
                lr=atk.lr,
                seed=seed * 1000 + r,
                optimizer=atk.optimizer,
            )
        except DivergedError as exc:
            logger.warning("label inference round %d diverged: %s", r, exc)
            continue
        truth.extend(data.train_labels[batch].tolist())
        restored.extend(result.labels.tolist())
        distances.append(result.d_final)
        logger.debug(
            "round %d recovered %.2f, D=%.3e",
            r,
            recovery_rate(result.labels, data.train_labels[batch]),
            result.d_final,
        )
    return np.asarray(truth, np.int64), np.asarray(restored, np.int64), distances


def execute(config: ExperimentConfig, show_progress: bool = False) -> RunOutcome:
    """Run one configured experiment and return rows plus diagnostics.

    Raises:
        ExperimentError: If any library error occurs, with the config
            section as context.
    """
    config = config.resolved()
    seed = config.seed
    chash = config_hash(config)
    started = time.perf_counter()
    atk = config.attack

    with _stage(config, "dataset"):
        data = prepare_data(config, seed)
    num_classes = data.train.num_classes
    with _stage(config, "defense"):
        defense = build_defense(
            config.defense, num_classes, cache_dir=os.getenv("VFL_SHIELD_COAE_CACHE")
        )
    with _stage(config, "attack"):
        attacks = make_attacks(config, data, seed)
    with _stage(config, "partition"):
        session = build_session(config, data, defense, attacks, seed)
        test_views = vertical_split(data.test, data.partition)

    target = atk.target_label if atk.kind in BACKDOOR_ATTACKS else None

    def evaluate() -> Dict[str, float]:
        return session.evaluate(
            test_views, data.test.labels, data.test.trigger_mask, target_label=target
        )

    rows: List[MetricsRow] = []

    def record_epoch(epoch: int, _session: VflSession) -> None:
        metrics = evaluate()
        rows.append(MetricsRow(chash, seed, epoch, "epoch", **metrics))
        logger.info(
            "%s seed=%d epoch %d main=%.4f backdoor=%.4f",
            config.name,
            seed,
            epoch,
            metrics["main_accuracy"],
            metrics["backdoor_accuracy"],
        )

    session.sinks.append(record_epoch)
    with _stage(config, "training"):
        epochs = range(config.epochs)
        for _ in tqdm(epochs, desc=config.name, disable=not show_progress):
            session.train_epoch()

    truth = restored = np.zeros(0, np.int64)
    if atk.kind == "label_inference":
        with _stage(config, "attack"):
            truth, restored, distances = run_label_inference(
                config, session, data, seed
            )
        rate = recovery_rate(restored, truth) if truth.size else float("nan")
        d_final = float(np.mean(distances)) if distances else float("nan")
        rows.append(
            MetricsRow(
                chash,
                seed,
                session.epoch,
                "attack",
                label_recovery_rate=rate,
                d_final=d_final,
            )
        )
        logger.info("%s seed=%d label recovery %.4f", config.name, seed, rate)

    wall = time.perf_counter() - started
    rows.append(
        MetricsRow(
            chash, seed, session.epoch, "final", **evaluate(), wall_time_s=wall
        )
    )
    leaks = session.audit.sample_level_leaks(party_indices(session.parties, "passive"))
    manifest = {
        "config_hash": chash,
        "seed": seed,
        "config": config.to_dict(),
        "wall_time_s": wall,
        "sample_level_leaks": len(leaks),
    }
    if isinstance(defense, CoaeDefense):
        manifest["coae"] = defense.coae.report.to_dict()
    if attacks:
        manifest["attackers"] = sorted(attacks)
    return RunOutcome(rows, manifest, truth, restored, num_classes)


def write_outcome(outcome: RunOutcome, storage: CSVStorage) -> None:
    """Append metric rows and record the run in the manifest."""
    rows = [r.to_dict() for r in outcome.rows]
    storage.append_rows(rows, METRICS_FILE, METRIC_COLUMNS)
    update_manifest(storage, [outcome.manifest])


def update_manifest(storage: CSVStorage, runs: List[Dict[str, Any]], **extra) -> None:
    """Append run records to ``manifest.json``."""
    manifest = {"runs": []}
    if storage.exists(MANIFEST_FILE):
        manifest = storage.load(MANIFEST_FILE)
    manifest["runs"].extend(runs)
    manifest.update(extra)
    storage.save(manifest, MANIFEST_FILE)


def run_experiment(
    config: ExperimentConfig,
    out_dir: Optional[Union[str, Path]] = None,
    show_progress: bool = False,
) -> List[MetricsRow]:
    """Run one experiment; write ``metrics.csv`` and ``manifest.json`` if ``out_dir``.

    Returns:
        One row per epoch, an attack row for label inference, and a final row.
    """
    outcome = execute(config, show_progress=show_progress)
    if out_dir is not None:
        write_outcome(outcome, CSVStorage(out_dir))
    return outcome.rows


def pd_matrix_frame(pd_result: PdMatrix) -> pd.DataFrame:
    """CSV layout: one row per true class, restored-class columns, row entropy."""
    c = pd_result.matrix.shape[0]
    frame = pd.DataFrame(pd_result.matrix, columns=[f"restored_{j}" for j in range(c)])
    frame.insert(0, "true_label", np.arange(c))
    frame["row_entropy"] = pd_result.row_entropy
    frame["supported"] = pd_result.supported
    return frame


def emit_pd_matrix(
    config: ExperimentConfig, out_dir: Optional[Union[str, Path]] = None
) -> PdMatrix:
    """Run label inference against a CoAE-defended session and tabulate restored labels.

    Raises:
        ConfigError: Unless the defense is CoAE and the attack is label inference.
    """
    if config.defense.mode != "coae":
        raise ConfigError("the PD matrix needs the coae defense", "defense.mode")
    if config.attack.kind != "label_inference":
        raise ConfigError(
            "the PD matrix needs the label_inference attack", "attack.kind"
        )
    outcome = execute(config)
    result = pd_matrix(
        outcome.true_labels, outcome.restored_labels, outcome.num_classes
    )
    if out_dir is not None:
        storage = CSVStorage(out_dir)
        write_outcome(outcome, storage)
        storage.save(pd_matrix_frame(result), PD_MATRIX_FILE)
    logger.info(
        "PD matrix: sparsity %.3f, mean row entropy %.4f",
        result.sparsity(),
        result.mean_row_entropy(),
    )
    return result
