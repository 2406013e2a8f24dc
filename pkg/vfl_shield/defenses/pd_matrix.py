"""Probability distribution of restored labels per true class."""

from dataclasses import dataclass

import numpy as np

from vfl_shield.errors import ContractError, ShapeError
from vfl_shield.numerics.functional import Array, row_entropy


@dataclass
class PdMatrix:
    """Row-stochastic restored-label matrix with row support flags."""

    matrix: Array
    supported: Array

    @property
    def row_entropy(self) -> Array:
        """Entropy of each row; zero for unsupported rows."""
        return row_entropy(self.matrix)

    def sparsity(self, threshold: float = 0.01) -> float:
        """Fraction of entries strictly below ``threshold``."""
        return float(np.mean(self.matrix < threshold))

    def mean_row_entropy(self) -> float:
        """Mean entropy over supported rows."""
        if not self.supported.any():
            return 0.0
        return float(np.mean(self.row_entropy[self.supported]))


def pd_matrix(true_labels: Array, restored_labels: Array, num_classes: int) -> PdMatrix:
    """Entry (i, j) = count(true=i, restored=j) / count(true=i).

    Rows for classes absent from ``true_labels`` are all-zero and flagged
    unsupported.
    """
    true_labels = np.asarray(true_labels, dtype=np.int64)
    restored_labels = np.asarray(restored_labels, dtype=np.int64)
    if true_labels.shape != restored_labels.shape or true_labels.ndim != 1:
        raise ShapeError(
            f"label vectors differ: {true_labels.shape} vs {restored_labels.shape}"
        )
    for labels in (true_labels, restored_labels):
        if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
            raise ContractError(f"labels must lie in [0, {num_classes})")
    counts = np.zeros((num_classes, num_classes), dtype=np.float64)
    np.add.at(counts, (true_labels, restored_labels), 1.0)
    support = counts.sum(axis=1)
    supported = support > 0
    matrix = np.zeros_like(counts)
    matrix[supported] = counts[supported] / support[supported, None]
    return PdMatrix(matrix=matrix, supported=supported)
