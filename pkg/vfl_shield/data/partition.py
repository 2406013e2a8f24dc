"""Vertical feature partitions.

Party order follows the session: passive parties 0..K-2, active party K-1.
Both constructors give the active party the first block (the leftmost
column strip for images) and the passive parties the remaining blocks left
to right, so the lower-right image corner belongs to the last passive party.
"""

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from vfl_shield.data.dataset import Dataset
from vfl_shield.errors import ContractError, ShapeError
from vfl_shield.numerics.functional import Array


def _block_bounds(total: int, parts: int) -> List[Tuple[int, int]]:
    if parts < 2:
        raise ContractError(f"need at least two parties, got {parts}")
    if total < parts:
        raise ContractError(f"cannot split {total} units among {parts} parties")
    edges = np.linspace(0, total, parts + 1).round().astype(int)
    return list(zip(edges[:-1].tolist(), edges[1:].tolist()))


def _party_order(parts: int) -> List[int]:
    """Block index owned by each party index."""
    return [b + 1 for b in range(parts - 1)] + [0]


@dataclass(frozen=True)
class PartitionSpec:
    """Per-party feature index arrays, disjoint and covering [0, d)."""

    columns: Tuple[Array, ...]
    num_features: int

    def __post_init__(self):
        cols = tuple(np.asarray(c, dtype=np.int64) for c in self.columns)
        object.__setattr__(self, "columns", cols)
        self.validate()

    def validate(self) -> None:
        """Raise ContractError on overlap or gaps."""
        if len(self.columns) < 2:
            raise ContractError("a partition needs at least two parties")
        merged = np.concatenate(self.columns)
        if merged.size and (merged.min() < 0 or merged.max() >= self.num_features):
            raise ContractError(f"feature index outside [0, {self.num_features})")
        counts = np.bincount(merged, minlength=self.num_features)
        if np.any(counts > 1):
            shared = np.flatnonzero(counts > 1)[:5].tolist()
            raise ContractError(f"features {shared} overlap")
        if np.any(counts == 0):
            missing = np.flatnonzero(counts == 0)[:5].tolist()
            raise ContractError(f"features {missing} unassigned")

    @property
    def num_parties(self) -> int:
        """Party count K."""
        return len(self.columns)

    @property
    def widths(self) -> List[int]:
        """Feature count per party."""
        return [c.size for c in self.columns]

    def owner(self, feature: int) -> int:
        """Party index owning a feature index."""
        for party, cols in enumerate(self.columns):
            if np.any(cols == feature):
                return party
        raise ContractError(f"feature {feature} is not assigned")

    @classmethod
    def even(cls, num_features: int, num_parties: int) -> "PartitionSpec":
        """Contiguous near-equal blocks of feature indices."""
        bounds = _block_bounds(num_features, num_parties)
        cols = [np.arange(*bounds[b]) for b in _party_order(num_parties)]
        return cls(tuple(cols), num_features)

    @classmethod
    def image_columns(cls, rows: int, cols: int, num_parties: int) -> "PartitionSpec":
        """Vertical column strips of a row-major flattened image."""
        bounds = _block_bounds(cols, num_parties)
        grid = np.arange(rows * cols).reshape(rows, cols)
        strips = [
            grid[:, slice(*bounds[b])].reshape(-1) for b in _party_order(num_parties)
        ]
        return cls(tuple(strips), rows * cols)


def vertical_split(dataset: Dataset, spec: PartitionSpec) -> List[Array]:
    """Per-party feature views in party order."""
    if spec.num_features != dataset.num_features:
        raise ShapeError(
            f"partition covers {spec.num_features} features, dataset has "
            f"{dataset.num_features}"
        )
    return [dataset.features[:, cols] for cols in spec.columns]


def merge_views(views: Sequence[Array], spec: PartitionSpec) -> Array:
    """Inverse of ``vertical_split``: scatter views back into feature order."""
    if len(views) != spec.num_parties:
        raise ShapeError(f"expected {spec.num_parties} views, got {len(views)}")
    n = np.asarray(views[0]).shape[0]
    out = np.empty((n, spec.num_features), dtype=np.float64)
    for view, cols in zip(views, spec.columns):
        out[:, cols] = view
    return out
