"""Datasets, vertical partitions and backdoor triggers."""

from vfl_shield.data.dataset import Dataset, split_dataset, subsample
from vfl_shield.data.mnist import (
    load_mnist,
    load_mnist_split,
    parse_idx_images,
    parse_idx_labels,
)
from vfl_shield.data.partition import PartitionSpec, merge_views, vertical_split
from vfl_shield.data.synthetic import blob_splits, synth_blobs
from vfl_shield.data.triggers import (
    TriggerSpec,
    apply_trigger,
    distributed_triggers,
    feature_trigger,
    mnist_trigger,
    select_poison,
    select_targets,
)

__all__ = [
    "Dataset",
    "PartitionSpec",
    "TriggerSpec",
    "apply_trigger",
    "blob_splits",
    "distributed_triggers",
    "feature_trigger",
    "load_mnist",
    "load_mnist_split",
    "merge_views",
    "mnist_trigger",
    "parse_idx_images",
    "parse_idx_labels",
    "select_poison",
    "select_targets",
    "split_dataset",
    "subsample",
    "synth_blobs",
    "vertical_split",
]
