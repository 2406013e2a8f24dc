"""Differential-privacy style noise and gradient sparsification baselines."""

import math

import numpy as np

from vfl_shield.defenses.base_defense import BaseDefense
from vfl_shield.errors import ContractError
from vfl_shield.numerics.functional import Array, check_finite

NOISE_KINDS = ("gaussian", "laplace")
DEFAULT_CLIP = 0.2


def _clip_rows(g: Array, clip: float) -> Array:
    norms = np.linalg.norm(g, axis=-1, keepdims=True)
    factor = np.minimum(1.0, clip / np.maximum(norms, np.finfo(float).tiny))
    return g * factor


def dp_noise(
    g: Array,
    kind: str,
    scale: float,
    rng: np.random.Generator,
    clip: float = DEFAULT_CLIP,
) -> Array:
    """Clip each per-sample gradient to L2 norm ``clip`` and add i.i.d. noise.

    Args:
        g: Per-sample gradient, a vector or a [batch, c] block (rows clipped
            independently).
        kind: ``"gaussian"`` (std ``scale``) or ``"laplace"`` (scale ``scale``).
        scale: Noise standard deviation or Laplace scale b.
        rng: Seeded generator.
        clip: L2 clipping bound.

    Returns:
        Noisy gradient of the same shape.
    """
    if kind not in NOISE_KINDS:
        raise ContractError(f"unknown noise kind {kind!r}")
    if scale <= 0:
        raise ContractError(f"noise scale must be positive, got {scale}")
    if clip <= 0:
        raise ContractError(f"clip bound must be positive, got {clip}")
    g = np.asarray(g, dtype=np.float64)
    clipped = _clip_rows(g, clip)
    if kind == "gaussian":
        noise = rng.normal(0.0, scale, size=g.shape)
    else:
        noise = rng.laplace(0.0, scale, size=g.shape)
    return check_finite(clipped + noise, "dp_noise")


def sparsify(g: Array, drop_rate: float) -> Array:
    """Keep the ceil((1 - s) * len) largest-magnitude entries of each vector.

    Ties resolve to the lower index. Kept values are copied exactly.
    """
    if not 0.0 <= drop_rate < 1.0:
        raise ContractError(f"drop rate must lie in [0, 1), got {drop_rate}")
    g = np.asarray(g, dtype=np.float64)
    rows = g.reshape(-1, g.shape[-1])
    n = rows.shape[1]
    keep = max(1, math.ceil((1.0 - drop_rate) * n - 1e-9))
    out = np.zeros_like(rows)
    for i, row in enumerate(rows):
        order = np.argsort(-np.abs(row), kind="stable")[:keep]
        out[i, order] = row[order]
    return out.reshape(g.shape)


class DpNoiseDefense(BaseDefense):
    """DP-G / DP-L: clipped per-sample gradients plus Gaussian or Laplace noise."""

    def __init__(self, kind: str, scale: float, clip: float = DEFAULT_CLIP):
        """Initialize the defense.

        Args:
            kind: ``"gaussian"`` or ``"laplace"``.
            scale: Gaussian sigma or Laplace b.
            clip: L2 clipping bound applied before noise.
        """
        if kind not in NOISE_KINDS:
            raise ContractError(f"unknown noise kind {kind!r}")
        if scale <= 0:
            raise ContractError(f"noise scale must be positive, got {scale}")
        self.kind = kind
        self.scale = scale
        self.clip = clip
        self.mode = f"dp_{kind}"

    def output_grads(self, logits, labels, rng):
        """Noisy clipped gradients."""
        grads = self.plain_grads(logits, labels)
        return dp_noise(grads, self.kind, self.scale, rng, self.clip)


class SparsifyDefense(BaseDefense):
    """GS: zero all but the largest-magnitude gradient entries per sample."""

    mode = "sparsify"

    def __init__(self, drop_rate: float):
        """Initialize with drop rate ``s`` in [0, 1)."""
        if not 0.0 <= drop_rate < 1.0:
            raise ContractError(f"drop rate must lie in [0, 1), got {drop_rate}")
        self.drop_rate = drop_rate

    def output_grads(self, logits, labels, rng):
        """Sparsified gradients."""
        return sparsify(self.plain_grads(logits, labels), self.drop_rate)
