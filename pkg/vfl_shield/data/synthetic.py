"""Seeded Gaussian blobs standing in for large multi-class datasets."""

from typing import Tuple

import numpy as np

from vfl_shield.data.dataset import Dataset, split_dataset
from vfl_shield.errors import ContractError


def synth_blobs(
    num_classes: int,
    num_features: int,
    n_per_class: int,
    spread: float,
    seed: int,
    split: str = "train",
) -> Dataset:
    """Isotropic Gaussian blob per class around a seeded random center.

    Centers are uniform in [0, 1]^d, samples are center + spread * N(0, I),
    and the whole array is then min-max scaled to [0, 1] with one global
    affine map, so spread=0 keeps every class's samples identical.

    Raises:
        ContractError: If c < 2, d < c or n_per_class < 1.
    """
    if num_classes < 2:
        raise ContractError(f"need at least two classes, got {num_classes}")
    if num_features < num_classes:
        raise ContractError(f"need d >= c, got d={num_features}, c={num_classes}")
    if n_per_class < 1 or spread < 0:
        raise ContractError("n_per_class must be positive and spread non-negative")
    rng = np.random.default_rng(seed)
    centers = rng.uniform(0.0, 1.0, size=(num_classes, num_features))
    labels = np.repeat(np.arange(num_classes), n_per_class)
    noise = rng.standard_normal((labels.size, num_features))
    features = centers[labels] + spread * noise
    lo, hi = features.min(), features.max()
    if hi > lo:
        features = (features - lo) / (hi - lo)
    order = rng.permutation(labels.size)
    return Dataset(features[order], labels[order], num_classes, split=split)


def blob_splits(
    num_classes: int,
    num_features: int,
    n_per_class: int,
    spread: float,
    seed: int,
    test_fraction: float = 0.2,
) -> Tuple[Dataset, Dataset]:
    """Train and test datasets drawn from the same blob centers."""
    full = synth_blobs(num_classes, num_features, n_per_class, spread, seed)
    return split_dataset(full, test_fraction, seed + 1)
