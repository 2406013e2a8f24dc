"""Gradient-replacement attacks run by a passive party under encryption.

Two attacks share the additive structure of the broadcast gradients:

* label replacement rewrites [[softmax(z) - e_y]] into
  [[softmax(z) - e_tau]] by adding [[e_y - e_tau]];
* the backdoor lets a triggered sample steal a target-class sample's
  identity: the target slot carries the backdoor sample's output, and the
  gradient returned for that slot, amplified by gamma, trains the backdoor
  sample.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from vfl_shield.attacks.base_attack import PassiveAttack
from vfl_shield.errors import ContractError
from vfl_shield.numerics.functional import Array
from vfl_shield.protocol.opaque import OpaqueVec

logger = logging.getLogger(__name__)

Ledger = List[Tuple[int, int]]


def replace_gradient_label(
    g: OpaqueVec, tau: int, y: int, row: Optional[int] = None
) -> OpaqueVec:
    """Turn an encrypted CE gradient for label ``y`` into one for ``tau``.

    Args:
        g: Encrypted gradient over c classes, a single vector or one row per
            sample.
        tau: Replacement label.
        y: Label the gradient was computed for.
        row: Row to rewrite when ``g`` holds several samples; all rows if
            omitted.

    Returns:
        ``g + [[e_y - e_tau]]``; no payload is read.

    Raises:
        ContractError: If a label or the row is out of range.
    """
    c = g.shape[-1]
    for name, label in (("tau", tau), ("y", y)):
        if not 0 <= label < c:
            raise ContractError(f"{name}={label} outside [0, {c})")
    delta = np.zeros(g.shape, dtype=np.float64)
    if row is None:
        delta[..., y] += 1.0
        delta[..., tau] -= 1.0
    else:
        if len(g.shape) != 2 or not 0 <= row < g.shape[0]:
            raise ContractError(f"row {row} outside a block of shape {g.shape}")
        delta[row, y] += 1.0
        delta[row, tau] -= 1.0
    return g.add_plain(delta)


@dataclass
class GrBackdoorConfig:
    """Inputs of the gradient-replacement backdoor.

    Attributes:
        target_label: Label tau the trigger should map to.
        target_ids: Clean training samples of class tau whose identity is stolen.
        backdoor_ids: Triggered training samples to be bound to tau.
        gamma: Amplify rate applied to the stolen gradient.
        random_h: Emit standard-normal outputs for backdoor samples.
    """

    target_label: int
    target_ids: Sequence[int]
    backdoor_ids: Sequence[int]
    gamma: float = 10.0
    random_h: bool = False

    def __post_init__(self):
        self.target_ids = np.asarray(self.target_ids, dtype=np.int64)
        self.backdoor_ids = np.asarray(self.backdoor_ids, dtype=np.int64)
        if np.intersect1d(self.target_ids, self.backdoor_ids).size:
            raise ContractError("target and backdoor sets must be disjoint")
        if self.gamma <= 0:
            raise ContractError(f"gamma must be positive, got {self.gamma}")


def gr_forward_hook(
    config: GrBackdoorConfig,
    batch_ids: Array,
    h_local: Array,
    backdoor_outputs: Callable[[Array], Array],
    rng: np.random.Generator,
) -> Tuple[Array, Ledger]:
    """Substitute backdoor outputs into target slots before encryption.

    Args:
        config: Attack configuration.
        batch_ids: Sample ids of the batch slots.
        h_local: The attacker's honest outputs for the batch.
        backdoor_outputs: Maps backdoor sample ids to the attacker's outputs.
        rng: Attacker-owned generator.

    Returns:
        The rows to encrypt and the ledger of (target slot, backdoor id) pairs.

    Raises:
        ContractError: If a target slot is present but no backdoor samples exist.
    """
    batch_ids = np.asarray(batch_ids, dtype=np.int64)
    out = np.array(h_local, dtype=np.float64, copy=True)
    ledger: Ledger = []
    if config.random_h:
        poisoned = np.flatnonzero(np.isin(batch_ids, config.backdoor_ids))
        if poisoned.size:
            out[poisoned] = rng.standard_normal((poisoned.size, out.shape[1]))
    slots = np.flatnonzero(np.isin(batch_ids, config.target_ids))
    if slots.size == 0:
        return out, ledger
    if config.backdoor_ids.size == 0:
        raise ContractError("target samples in batch but the backdoor set is empty")
    chosen = rng.choice(config.backdoor_ids, size=slots.size, replace=True)
    out[slots] = backdoor_outputs(chosen)
    ledger.extend(zip(slots.tolist(), chosen.tolist()))
    return out, ledger


def gr_backward_hook(
    config: GrBackdoorConfig,
    grads: OpaqueVec,
    ledger: Ledger,
    batch_ids: Array,
    x: Array,
    backdoor_features: Callable[[Array], Array],
) -> Tuple[OpaqueVec, Array]:
    """Redirect gamma times each target slot's gradient to its backdoor sample.

    The per-sample gradients are recombined with a diagonal plaintext
    matrix (gamma on paired slots, zero on random-output backdoor slots), and
    paired slots take the backdoor sample's features for the local Jacobian.

    Returns:
        Opaque gradients and the inputs to differentiate at.

    Raises:
        ContractError: If the ledger references a slot outside the batch.
    """
    batch_ids = np.asarray(batch_ids, dtype=np.int64)
    size = batch_ids.size
    weights = np.eye(size)
    x_used = np.array(x, dtype=np.float64, copy=True)
    if config.random_h:
        poisoned = np.flatnonzero(np.isin(batch_ids, config.backdoor_ids))
        weights[poisoned, poisoned] = 0.0
    if ledger:
        slots = np.asarray([s for s, _ in ledger], dtype=np.int64)
        if slots.min() < 0 or slots.max() >= size:
            raise ContractError(f"ledger slot outside a batch of {size}")
        backdoor = np.asarray([j for _, j in ledger], dtype=np.int64)
        if not np.all(np.isin(backdoor, config.backdoor_ids)):
            raise ContractError("ledger references a sample outside the backdoor set")
        weights[slots, slots] = config.gamma
        x_used[slots] = backdoor_features(backdoor)
    if np.array_equal(weights, np.eye(size)):
        return grads, x_used
    return grads.linear_combine(weights), x_used


class GradientReplacementBackdoor(PassiveAttack):
    """Identity-steal backdoor installed on one (or each colluding) passive party.

    Colluding parties built with the same ``seed`` draw identical pairings,
    so every attacker substitutes the same backdoor sample into a slot.
    """

    name = "grad_replacement"

    def __init__(self, config: GrBackdoorConfig, seed: int = 0):
        """Initialize the attack.

        Args:
            config: Target and backdoor sets, tau and gamma.
            seed: Seed of the pairing generator.
        """
        self.config = config
        self.rng = np.random.default_rng(seed)
        self.ledger: Ledger = []
        self.pairs_total = 0

    def on_round_start(self, party, batch_ids):
        """Drop the previous round's ledger."""
        self.ledger = []

    def on_forward(self, party, batch_ids, x, h):
        """Substitute backdoor outputs into target slots."""

        def outputs(ids):
            return party.model(party.features[ids])

        out, self.ledger = gr_forward_hook(self.config, batch_ids, h, outputs, self.rng)
        self.pairs_total += len(self.ledger)
        return out

    def on_backward(self, party, batch_ids, x, grads):
        """Train backdoor samples with amplified stolen gradients."""
        result = gr_backward_hook(
            self.config,
            grads,
            self.ledger,
            batch_ids,
            x,
            lambda ids: party.features[ids],
        )
        self.ledger = []
        return result


@dataclass
class LabelReplacementAttack(PassiveAttack):
    """Rewrite the encrypted gradients of known-label samples to label tau.

    Attributes:
        target_label: Label tau to impose.
        known_labels: Sample id to label mapping the attacker holds (known
            or inferred beforehand); only these samples are rewritten.
        replaced: Number of rewritten slots so far.
    """

    target_label: int
    known_labels: Dict[int, int] = field(default_factory=dict)
    replaced: int = 0
    name = "label_replacement"

    def on_backward(self, party, batch_ids, x, grads):
        """Apply ``replace_gradient_label`` to every known slot."""
        for slot, sample in enumerate(np.asarray(batch_ids).tolist()):
            y = self.known_labels.get(int(sample))
            if y is None or y == self.target_label:
                continue
            grads = replace_gradient_label(grads, self.target_label, y, row=slot)
            self.replaced += 1
        return grads, x


def active_label_poison(labels: Array, poison_ids: Sequence[int], target: int) -> Array:
    """Copy of ``labels`` with the poisoned samples relabeled to ``target``."""
    out = np.array(labels, dtype=np.int64, copy=True)
    ids = np.asarray(list(poison_ids), dtype=np.int64)
    if ids.size:
        out[ids] = target
    return out
