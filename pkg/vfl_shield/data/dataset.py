"""In-memory dataset split with labels and trigger marks."""

from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np

from vfl_shield.errors import ContractError, ShapeError
from vfl_shield.numerics.functional import Array

SPLITS = ("train", "test")


@dataclass(frozen=True)
class Dataset:
    """Features, labels and trigger marks of one split.

    Attributes:
        features: [n, d] float64 in [0, 1].
        labels: [n] class indices in [0, num_classes).
        num_classes: Class count c.
        split: ``"train"`` or ``"test"``.
        trigger_mask: [n] bool, True for trigger-marked samples.
        image_shape: (rows, cols) when features are flattened images.
    """

    features: Array
    labels: Array
    num_classes: int
    split: str = "train"
    trigger_mask: Optional[Array] = None
    image_shape: Optional[Tuple[int, int]] = None

    def __post_init__(self):
        features = np.array(self.features, dtype=np.float64)
        labels = np.array(self.labels, dtype=np.int64)
        if features.ndim != 2 or labels.shape != (features.shape[0],):
            raise ShapeError(f"features {features.shape} vs labels {labels.shape}")
        if self.split not in SPLITS:
            raise ContractError(f"split must be one of {SPLITS}, got {self.split!r}")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise ContractError(f"labels must lie in [0, {self.num_classes})")
        if not np.all(np.isfinite(features)):
            raise ContractError("features must be finite")
        mask = self.trigger_mask
        mask = np.zeros(labels.shape, bool) if mask is None else np.array(mask, bool)
        if mask.shape != labels.shape:
            raise ShapeError(f"trigger mask {mask.shape} vs {labels.shape} labels")
        if self.image_shape is not None:
            rows, cols = self.image_shape
            if rows * cols != features.shape[1]:
                raise ShapeError(
                    f"image shape {self.image_shape} vs d={features.shape[1]}"
                )
        features.setflags(write=False)
        labels.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "trigger_mask", mask)

    @property
    def num_samples(self) -> int:
        """Sample count n."""
        return self.features.shape[0]

    @property
    def num_features(self) -> int:
        """Feature count d."""
        return self.features.shape[1]

    def subset(self, ids) -> "Dataset":
        """Dataset restricted to ``ids`` (in that order)."""
        ids = np.asarray(ids, dtype=np.int64)
        return replace(
            self,
            features=self.features[ids],
            labels=self.labels[ids],
            trigger_mask=self.trigger_mask[ids],
        )

    def with_labels(self, labels: Array) -> "Dataset":
        """Copy with replaced labels."""
        return replace(self, labels=labels)

    def triggered_ids(self) -> Array:
        """Ids of trigger-marked samples."""
        return np.flatnonzero(self.trigger_mask)

    def class_ids(self, label: int, clean_only: bool = False) -> Array:
        """Ids with the given label, optionally excluding triggered samples."""
        keep = self.labels == label
        if clean_only:
            keep &= ~self.trigger_mask
        return np.flatnonzero(keep)


def split_dataset(
    dataset: Dataset, test_fraction: float, seed: int
) -> Tuple[Dataset, Dataset]:
    """Random train/test split; the second dataset is tagged ``test``."""
    if not 0.0 < test_fraction < 1.0:
        raise ContractError(f"test fraction must lie in (0, 1), got {test_fraction}")
    order = np.random.default_rng(seed).permutation(dataset.num_samples)
    n_test = max(1, int(round(test_fraction * dataset.num_samples)))
    train = replace(dataset.subset(order[n_test:]), split="train")
    test = replace(dataset.subset(order[:n_test]), split="test")
    return train, test


def subsample(dataset: Dataset, count: int, seed: int) -> Dataset:
    """Seeded random subset of ``count`` samples (all of them if fewer)."""
    if count >= dataset.num_samples:
        return dataset
    rng = np.random.default_rng(seed)
    ids = np.sort(rng.choice(dataset.num_samples, count, replace=False))
    return dataset.subset(ids)
