"""Base class for the gradient defenses the active party applies."""

from abc import ABC, abstractmethod

import numpy as np

from vfl_shield.numerics.functional import Array, argmax_rows, one_hot, softmax_ce_grad


class BaseDefense(ABC):
    """Abstract base class for active-party gradient defenses.

    A defense turns fused logits and true labels into the per-sample
    gradients the active party encrypts and broadcasts, and maps fused
    softmax outputs back to class predictions.
    """

    mode = "none"

    @abstractmethod
    def output_grads(
        self, logits: Array, labels: Array, rng: np.random.Generator
    ) -> Array:
        """Per-sample gradients dloss/dH_i to broadcast, shape [batch, c]."""
        pass

    def decode(self, probs: Array) -> Array:
        """Class index per sample from fused softmax outputs."""
        return argmax_rows(probs)

    @staticmethod
    def plain_grads(logits: Array, labels: Array) -> Array:
        """Undefended cross-entropy gradients for integer labels."""
        return softmax_ce_grad(logits, one_hot(labels, logits.shape[1]))


class NoDefense(BaseDefense):
    """Plain protocol: broadcast softmax(H) - onehot(y)."""

    mode = "none"

    def output_grads(self, logits, labels, rng):
        """Undefended gradients."""
        return self.plain_grads(logits, labels)
