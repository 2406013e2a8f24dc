"""Hook interface for malicious passive parties."""

from abc import ABC
from typing import TYPE_CHECKING, Tuple

from vfl_shield.numerics.functional import Array
from vfl_shield.protocol.opaque import OpaqueVec

if TYPE_CHECKING:
    from vfl_shield.protocol.parties import PassiveParty


class PassiveAttack(ABC):
    """Base class for hooks a malicious passive party installs.

    Hooks run inside the attacker's own party and only see what that party
    legitimately holds: its features, its own plaintext outputs, opaque
    per-sample gradients and its decrypted batch-mean parameter gradient.
    The defaults leave the protocol untouched.
    """

    name = "passive_attack"

    def on_round_start(self, party: "PassiveParty", batch_ids: Array) -> None:
        """Called before the forward pass of every round."""

    def on_forward(
        self,
        party: "PassiveParty",
        batch_ids: Array,
        x: Array,
        h: Array,
    ) -> Array:
        """Return the plaintext rows to encrypt and send; default unchanged."""
        return h

    def on_backward(
        self,
        party: "PassiveParty",
        batch_ids: Array,
        x: Array,
        grads: OpaqueVec,
    ) -> Tuple[OpaqueVec, Array]:
        """Return the opaque gradients and inputs used for the local update."""
        return grads, x

    def on_gradient(
        self, party: "PassiveParty", batch_ids: Array, x: Array, grad: Array
    ) -> None:
        """Observe the decrypted batch-mean parameter gradient."""
