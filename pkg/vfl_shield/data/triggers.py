"""Backdoor triggers and target/poison sample selection."""

from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from vfl_shield.data.dataset import Dataset
from vfl_shield.data.partition import PartitionSpec
from vfl_shield.errors import ContractError

PIXEL_MAX = 255.0

MNIST_TRIGGER_PIXELS = ((25, 27), (27, 25), (26, 26), (27, 27))
DISTRIBUTED_TRIGGER_PIXELS = ((27, 13), (27, 20), (27, 27))


@dataclass(frozen=True)
class TriggerSpec:
    """Trigger pattern.

    Attributes:
        kind: ``"pixel"`` (positions are (row, col), values raw 0-255) or
            ``"feature"`` (positions are feature indices, values already scaled).
        positions: Pixel coordinates or feature indices.
        values: One value per position.
        owner: Party index that must own every position, if distributed.
    """

    kind: str
    positions: Tuple
    values: Tuple[float, ...]
    owner: Optional[int] = None

    def __post_init__(self):
        if self.kind not in ("pixel", "feature"):
            raise ContractError(f"unknown trigger kind {self.kind!r}")
        if len(self.positions) != len(self.values) or not self.positions:
            raise ContractError("trigger needs one value per position")

    def feature_indices(
        self, image_shape: Optional[Tuple[int, int]], d: int
    ) -> np.ndarray:
        """Flat feature indices of the trigger positions."""
        if self.kind == "pixel":
            if image_shape is None:
                raise ContractError("pixel triggers need an image dataset")
            rows, cols = image_shape
            idx = []
            for r, c in self.positions:
                if not (0 <= r < rows and 0 <= c < cols):
                    raise ContractError(f"pixel ({r}, {c}) outside {rows}x{cols}")
                idx.append(r * cols + c)
            return np.asarray(idx, dtype=np.int64)
        idx = np.asarray(self.positions, dtype=np.int64)
        if idx.min() < 0 or idx.max() >= d:
            raise ContractError(f"trigger feature outside [0, {d})")
        return idx

    def scaled_values(self) -> np.ndarray:
        """Values in the [0, 1] feature domain."""
        values = np.asarray(self.values, dtype=np.float64)
        return values / PIXEL_MAX if self.kind == "pixel" else values


def mnist_trigger(owner: Optional[int] = None) -> TriggerSpec:
    """Four-pixel lower-right trigger of value 255."""
    return TriggerSpec("pixel", MNIST_TRIGGER_PIXELS, (PIXEL_MAX,) * 4, owner)


def distributed_triggers(owners: Sequence[int]) -> List[TriggerSpec]:
    """One single-pixel trigger per colluding party, together a three-pixel trigger."""
    if len(owners) != len(DISTRIBUTED_TRIGGER_PIXELS):
        raise ContractError(f"need {len(DISTRIBUTED_TRIGGER_PIXELS)} owners")
    return [
        TriggerSpec("pixel", (pixel,), (PIXEL_MAX,), owner)
        for pixel, owner in zip(DISTRIBUTED_TRIGGER_PIXELS, owners)
    ]


def feature_trigger(
    num_features: int, value: float = 1.0, owner: Optional[int] = None
) -> TriggerSpec:
    """Last feature set to ``value``."""
    return TriggerSpec("feature", (num_features - 1,), (value,), owner)


def apply_trigger(
    dataset: Dataset,
    spec: TriggerSpec,
    ids: Sequence[int],
    partition: Optional[PartitionSpec] = None,
) -> Dataset:
    """Stamp the trigger onto ``ids`` and mark them; idempotent.

    Raises:
        ContractError: On invalid ids or positions, or a position outside the
            owner's slice when the trigger names an owner.
    """
    ids = np.asarray(list(ids), dtype=np.int64)
    idx = spec.feature_indices(dataset.image_shape, dataset.num_features)
    if spec.owner is not None:
        if partition is None:
            raise ContractError("an owned trigger needs the partition to check against")
        owned = partition.columns[spec.owner]
        if not np.all(np.isin(idx, owned)):
            raise ContractError(f"trigger positions leave party {spec.owner}'s slice")
    if ids.size == 0:
        return dataset
    if ids.min() < 0 or ids.max() >= dataset.num_samples:
        raise ContractError(f"sample ids must lie in [0, {dataset.num_samples})")
    features = dataset.features.copy()
    features[np.ix_(ids, idx)] = spec.scaled_values()
    mask = dataset.trigger_mask.copy()
    mask[ids] = True
    return replace(dataset, features=features, trigger_mask=mask)


def select_targets(
    dataset: Dataset, target_label: int, k: int, seed: int
) -> np.ndarray:
    """``k`` distinct clean samples of class ``target_label``.

    Raises:
        ContractError: If the class has fewer than ``k`` clean samples.
    """
    pool = dataset.class_ids(target_label, clean_only=True)
    if pool.size < k:
        raise ContractError(
            f"class {target_label} has {pool.size} clean samples, {k} requested"
        )
    return np.random.default_rng(seed).choice(pool, size=k, replace=False)


def select_poison(
    dataset: Dataset,
    count: int,
    seed: int,
    exclude_label: Optional[int] = None,
    exclude_ids: Sequence[int] = (),
) -> np.ndarray:
    """``count`` random samples to trigger, skipping a label and given ids."""
    keep = np.ones(dataset.num_samples, bool)
    if exclude_label is not None:
        keep &= dataset.labels != exclude_label
    keep[np.asarray(list(exclude_ids), dtype=np.int64)] = False
    pool = np.flatnonzero(keep)
    if pool.size < count:
        raise ContractError(f"only {pool.size} eligible samples, {count} requested")
    return np.sort(np.random.default_rng(seed).choice(pool, size=count, replace=False))
