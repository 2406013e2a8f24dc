"""Parties of a vertical federated session."""

from __future__ import annotations

import logging
from typing import TYPE_CHECKING, List, Optional, Sequence

import numpy as np

from vfl_shield.errors import ContractError, ShapeError
from vfl_shield.numerics.functional import Array, as_float_array
from vfl_shield.numerics.mlp import Mlp
from vfl_shield.protocol.opaque import FusionKey, OpaqueVec, TrustedThirdParty

if TYPE_CHECKING:
    from vfl_shield.attacks.base_attack import PassiveAttack
    from vfl_shield.defenses.base_defense import BaseDefense

logger = logging.getLogger(__name__)


class Party:
    """State shared by active and passive parties.

    Every party holds a bottom model and a feature slice.
    """

    role = "party"

    def __init__(self, index: int, model: Mlp, features: Array):
        """Initialize the party.

        Args:
            index: Position in the session's party list.
            model: Bottom model G_k mapping the party's features to c logits.
            features: The party's vertical slice, shape [n, d_k].

        Raises:
            ShapeError: If the model input width differs from the slice width.
        """
        features = as_float_array(features, name="features")
        if features.shape[1] != model.in_dim:
            raise ShapeError(
                f"party {index}: model expects {model.in_dim} features, "
                f"slice has {features.shape[1]}"
            )
        self.index = index
        self.model = model
        self.features = features

    @property
    def num_samples(self) -> int:
        """Size of the shared sample universe."""
        return self.features.shape[0]

    def embed(self, batch_ids: Array) -> Array:
        """Plaintext local output H^k for the batch (never leaves the party)."""
        return self.model(self.features[batch_ids])

    def local_update(
        self,
        batch_ids: Array,
        grads: OpaqueVec,
        ttp: TrustedThirdParty,
        lr: float,
        apply_updates: bool = True,
    ) -> Array:
        """Turn broadcast opaque gradients into a parameter update.

        The party pushes the opaque per-sample gradients through its own
        Jacobians, has the TTP decrypt the batch-mean result and applies
        theta <- theta - lr * grad.

        Returns:
            The decrypted flat parameter gradient.
        """
        x = self.features[batch_ids]
        grads, x = self._prepare_backward(batch_ids, x, grads)
        plain = ttp.decrypt(grads.param_grad(self.model, x, self.index), self.index)
        self._observe(batch_ids, x, plain)
        if apply_updates:
            self.model.sgd_step(plain, lr)
        return plain

    def _prepare_backward(self, batch_ids, x, grads):
        return grads, x

    def _observe(self, batch_ids, x, plain) -> None:
        pass


class PassiveParty(Party):
    """Label-free party that contributes encrypted embeddings.

    An optional ``PassiveAttack`` is consulted at every hook point.
    """

    role = "passive"

    def __init__(
        self,
        index: int,
        model: Mlp,
        features: Array,
        attack: Optional["PassiveAttack"] = None,
    ):
        """Initialize the passive party; see ``Party`` for the arguments."""
        super().__init__(index, model, features)
        self.attack = attack

    def send_embeddings(self, batch_ids: Array) -> OpaqueVec:
        """Encrypt this party's outputs for the batch."""
        if self.attack is not None:
            self.attack.on_round_start(self, batch_ids)
        x = self.features[batch_ids]
        h = self.model(x)
        if self.attack is not None:
            h = self.attack.on_forward(self, batch_ids, x, h)
        return OpaqueVec.encrypt(h, self.index, batch_ids, kind="embedding")

    def _prepare_backward(self, batch_ids, x, grads):
        if self.attack is None:
            return grads, x
        return self.attack.on_backward(self, batch_ids, x, grads)

    def _observe(self, batch_ids, x, plain) -> None:
        if self.attack is not None:
            self.attack.on_gradient(self, batch_ids, x, plain)


class ActiveParty(Party):
    """Label holder: fuses embeddings, computes the loss and applies its defense."""

    role = "active"

    def __init__(
        self,
        index: int,
        model: Mlp,
        features: Array,
        labels: Array,
        defense: "BaseDefense",
        fusion_key: Optional[FusionKey] = None,
    ):
        """Initialize the active party.

        Args:
            index: Position in the session's party list (the last one).
            model: Bottom model G_K.
            features: The active party's vertical slice.
            labels: Integer class labels for all n samples.
            defense: Transform applied to per-sample gradients before they
                are encrypted.
            fusion_key: Capability to open passive embeddings; the session
                installs one bound to its audit log.
        """
        super().__init__(index, model, features)
        labels = np.asarray(labels, dtype=np.int64)
        if labels.shape != (self.num_samples,):
            raise ShapeError(
                f"labels {labels.shape} do not match {self.num_samples} samples"
            )
        if labels.size and (labels.min() < 0 or labels.max() >= model.out_dim):
            raise ContractError(f"labels must lie in [0, {model.out_dim})")
        self.labels = labels
        self.defense = defense
        self.fusion_key = fusion_key

    @property
    def num_classes(self) -> int:
        """Class count c."""
        return self.model.out_dim

    def fuse(self, batch_ids: Array, embeddings: Sequence[OpaqueVec]) -> Array:
        """Plaintext fused logits sum_k H^k for the batch."""
        if self.fusion_key is None:
            raise ContractError("active party has no fusion key installed")
        total: Optional[OpaqueVec] = None
        for emb in embeddings:
            total = emb if total is None else total.add(emb)
        own = self.embed(batch_ids)
        if total is None:
            return own
        return self.fusion_key.open_embeddings(total) + own

    def compute_gradients(
        self,
        batch_ids: Array,
        embeddings: Sequence[OpaqueVec],
        rng: np.random.Generator,
    ) -> OpaqueVec:
        """Defended per-sample gradients dloss/dH_i, encrypted for broadcast."""
        logits = self.fuse(batch_ids, embeddings)
        g = self.defense.output_grads(logits, self.labels[batch_ids], rng)
        return OpaqueVec.encrypt(g, self.index, batch_ids, kind="gradient")


def party_indices(parties: Sequence[Party], role: str) -> List[int]:
    """Indices of the parties with the given role."""
    return [p.index for p in parties if p.role == role]
