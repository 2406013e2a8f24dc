"""Round loop of feature-partitioned training with encrypted exchanges."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from vfl_shield.errors import ContractError, ShapeError
from vfl_shield.numerics.functional import Array, softmax
from vfl_shield.protocol.opaque import AuditLog, FusionKey, TrustedThirdParty
from vfl_shield.protocol.parties import ActiveParty, PassiveParty

logger = logging.getLogger(__name__)

EpochSink = Callable[[int, "VflSession"], None]


def make_batch_plan(
    num_samples: int, batch_size: int, rng: np.random.Generator
) -> List[Array]:
    """Shuffle [0, n) and cut it into consecutive batches; the last may be short."""
    if num_samples < 1:
        raise ContractError("cannot plan batches over an empty sample set")
    if batch_size < 1:
        raise ContractError(f"batch size must be positive, got {batch_size}")
    order = rng.permutation(num_samples)
    return [order[i : i + batch_size] for i in range(0, num_samples, batch_size)]


@dataclass
class RoundResult:
    """Outcome of one protocol round.

    Attributes:
        batch_ids: Sample ids processed by every party.
        gradients: Decrypted batch-mean parameter gradient per party index.
    """

    batch_ids: Array
    gradients: Dict[int, Array] = field(default_factory=dict)


class VflSession:
    """K-party session: passive parties first, the active party last."""

    def __init__(
        self,
        passive: Sequence[PassiveParty],
        active: ActiveParty,
        batch_size: int = 64,
        lr: float = 0.1,
        epochs: int = 1,
        seed: int = 0,
        sinks: Optional[List[EpochSink]] = None,
    ):
        """Initialize the session.

        Args:
            passive: Passive parties, indices 0..K-2.
            active: The active party, index K-1.
            batch_size: Samples per round.
            lr: Learning rate eta shared by all parties.
            epochs: Default epoch count for ``train``.
            seed: Seed of the batch-plan and defense generator.
            sinks: Callbacks invoked after every epoch.

        Raises:
            ContractError: If fewer than two parties are given, indices are
                not 0..K-1, or parties index different sample universes.
        """
        self.parties = list(passive) + [active]
        if len(self.parties) < 2:
            raise ContractError("a session needs at least two parties")
        if [p.index for p in self.parties] != list(range(len(self.parties))):
            raise ContractError(
                "party indices must be 0..K-1 with the active party last"
            )
        sizes = {p.num_samples for p in self.parties}
        if len(sizes) != 1:
            raise ContractError(
                f"parties disagree on the sample count: {sorted(sizes)}"
            )
        out_dims = {p.model.out_dim for p in self.parties}
        if len(out_dims) != 1:
            raise ShapeError(f"bottom models disagree on the class count: {out_dims}")
        self.passive = list(passive)
        self.active = active
        self.batch_size = batch_size
        self.lr = lr
        self.epochs = epochs
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self.sinks = list(sinks or [])
        self.audit = AuditLog()
        self.ttp = TrustedThirdParty(self.audit)
        active.fusion_key = FusionKey(active.index, self.audit)
        self.epoch = 0

    @property
    def num_samples(self) -> int:
        """Size of the shared sample universe."""
        return self.active.num_samples

    @property
    def num_classes(self) -> int:
        """Class count c."""
        return self.active.num_classes

    def round(self, batch_ids: Array, apply_updates: bool = True) -> RoundResult:
        """Run one protocol round on ``batch_ids``.

        Each passive party sends encrypted embeddings, the active party
        fuses them, applies its defense and broadcasts encrypted per-sample
        gradients, and every party updates through the TTP.

        Args:
            batch_ids: Sample ids shared by all parties.
            apply_updates: If False, parameters stay frozen (attack snapshots).

        Returns:
            The decrypted gradient every party received.

        Raises:
            ContractError: On an empty batch or out-of-range ids.
        """
        batch_ids = np.asarray(batch_ids, dtype=np.int64).reshape(-1)
        if batch_ids.size == 0:
            raise ContractError("batch must be nonempty")
        if batch_ids.min() < 0 or batch_ids.max() >= self.num_samples:
            raise ContractError(
                f"batch ids must lie in [0, {self.num_samples}), got "
                f"[{batch_ids.min()}, {batch_ids.max()}]"
            )
        embeddings = [p.send_embeddings(batch_ids) for p in self.passive]
        grads = self.active.compute_gradients(batch_ids, embeddings, self.rng)
        result = RoundResult(batch_ids=batch_ids)
        for party in self.parties:
            result.gradients[party.index] = party.local_update(
                batch_ids, grads, self.ttp, self.lr, apply_updates
            )
        return result

    def train_epoch(self) -> int:
        """One pass over a fresh batch plan; returns the number of rounds."""
        plan = make_batch_plan(self.num_samples, self.batch_size, self.rng)
        for batch_ids in plan:
            self.round(batch_ids)
        self.epoch += 1
        for sink in self.sinks:
            sink(self.epoch, self)
        return len(plan)

    def train(self, epochs: Optional[int] = None) -> None:
        """Run ``epochs`` epochs (the session default if omitted)."""
        epochs = self.epochs if epochs is None else epochs
        for _ in range(epochs):
            rounds = self.train_epoch()
            logger.debug("epoch %d done (%d rounds)", self.epoch, rounds)

    def fused_probs(self, views: Sequence[Array]) -> Array:
        """softmax(sum_k G_k(x^k)) for per-party feature views in party order."""
        if len(views) != len(self.parties):
            raise ShapeError(f"expected {len(self.parties)} views, got {len(views)}")
        logits = None
        for party, view in zip(self.parties, views):
            h = party.model(view)
            logits = h if logits is None else logits + h
        return softmax(logits)

    def predict(self, views: Sequence[Array]) -> Array:
        """Class index per sample; CoAE mode decodes through its decoder.

        Raises:
            ShapeError: If a view's width does not match its party's model.
        """
        return self.active.defense.decode(self.fused_probs(views))

    def evaluate(
        self,
        views: Sequence[Array],
        labels: Array,
        trigger_mask: Optional[Array] = None,
        target_label: Optional[int] = None,
        label_filter: Optional[Sequence[int]] = None,
    ) -> Dict[str, float]:
        """Main and backdoor accuracy on an evaluation set.

        Args:
            views: Per-party feature views in party order.
            labels: True labels.
            trigger_mask: Marks triggered samples; all clean if omitted.
            target_label: Backdoor target tau.
            label_filter: If given, only samples whose true label is in this
                set are evaluated.

        Returns:
            ``main_accuracy`` over clean samples and ``backdoor_accuracy``
            (fraction of triggered samples predicted as tau; NaN without
            triggered samples or target).

        Raises:
            ContractError: If no samples remain to evaluate.
        """
        labels = np.asarray(labels, dtype=np.int64)
        if trigger_mask is None:
            mask = np.zeros(labels.shape, bool)
        else:
            mask = np.asarray(trigger_mask, bool)
        keep = np.ones(labels.shape, bool)
        if label_filter is not None:
            keep = np.isin(labels, np.asarray(list(label_filter), dtype=np.int64))
        if not keep.any():
            raise ContractError("evaluation set is empty")
        preds = self.predict([np.asarray(v)[keep] for v in views])
        labels, mask = labels[keep], mask[keep]
        clean = ~mask
        main = float("nan")
        if clean.any():
            main = float(np.mean(preds[clean] == labels[clean]))
        backdoor = float("nan")
        if target_label is not None and mask.any():
            backdoor = float(np.mean(preds[mask] == target_label))
        return {"main_accuracy": main, "backdoor_accuracy": backdoor}
