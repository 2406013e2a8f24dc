"""Gradient-based optimizers for numpy-owned parameters.

Parameters stay numpy arrays; torch tensors created with ``torch.from_numpy``
share their memory, so ``torch.optim`` updates them in place. Gradients are
computed analytically elsewhere and handed over through ``step``.
"""

from typing import List, Sequence

import numpy as np
import torch

from vfl_shield.errors import ContractError, ShapeError

OPTIMIZERS = ("adam", "sgd")


class ArrayOptimizer:
    """Adam or plain gradient descent over a list of float64 arrays."""

    def __init__(
        self,
        params: Sequence[np.ndarray],
        lr: float,
        kind: str = "adam",
        betas=(0.9, 0.999),
    ):
        """Initialize the optimizer.

        Args:
            params: Contiguous float64 arrays updated in place.
            lr: Learning rate.
            kind: ``"adam"`` or ``"sgd"``.
            betas: Adam moment decay rates.
        """
        if kind not in OPTIMIZERS:
            raise ContractError(f"unknown optimizer {kind!r}")
        for p in params:
            if p.dtype != np.float64 or not p.flags["C_CONTIGUOUS"]:
                raise ContractError("parameters must be contiguous float64 arrays")
        self.arrays = list(params)
        self._tensors: List[torch.Tensor] = [
            torch.from_numpy(p).requires_grad_(True) for p in params
        ]
        if kind == "adam":
            self._opt = torch.optim.Adam(
                self._tensors, lr=lr, betas=tuple(betas), foreach=False
            )
        else:
            self._opt = torch.optim.SGD(self._tensors, lr=lr, foreach=False)
        self.kind = kind
        self.steps = 0

    def step(self, grads: Sequence[np.ndarray]) -> None:
        """Apply one update given gradients shaped like the parameters."""
        if len(grads) != len(self._tensors):
            raise ShapeError("gradient list does not match parameter list")
        for t, g in zip(self._tensors, grads):
            g = np.asarray(g, dtype=np.float64)
            if g.shape != tuple(t.shape):
                raise ShapeError(f"gradient {g.shape} vs parameter {tuple(t.shape)}")
            t.grad = torch.from_numpy(np.ascontiguousarray(g))
        with torch.no_grad():
            self._opt.step()
        self.steps += 1

    def state_arrays(self) -> List[np.ndarray]:
        """Adam first and second moments as numpy copies (empty for sgd)."""
        out = []
        for t in self._tensors:
            state = self._opt.state.get(t, {})
            for key in ("exp_avg", "exp_avg_sq"):
                if key in state:
                    out.append(state[key].detach().numpy().copy())
        return out
