"""Confusional autoencoder (CoAE) label disguise.

The encoder maps a one-hot label to a soft fake label that points away from
the true class and spreads its mass; the decoder maps fused predictions back
to the true class. Only the active party holds the pair.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import struct
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np

from vfl_shield.defenses.base_defense import BaseDefense
from vfl_shield.errors import (
    ContractError,
    FormatError,
    ShapeError,
    TrainingFailureError,
)
from vfl_shield.numerics.functional import (
    LOG_FLOOR,
    Array,
    argmax_rows,
    as_float_array,
    entropy,
    floored_log,
    one_hot,
    prob_cross_entropy,
    row_entropy,
    softmax,
    softmax_ce_grad,
    softmax_vjp,
)
from vfl_shield.numerics.mlp import Dense, Mlp, backward, forward
from vfl_shield.numerics.optim import ArrayOptimizer

logger = logging.getLogger(__name__)

MAGIC = b"COAE"
FORMAT_VERSION = 1
CONFUSION_FLOOR = 0.5 * math.log(2.0)
IDENTITY_SHARPNESS = 30.0


def hidden_width(num_classes: int) -> int:
    """Hidden layer width (6c)^2."""
    return (6 * num_classes) ** 2


def _build_half(num_classes: int, rng: np.random.Generator) -> Mlp:
    return Mlp.create(
        [num_classes, hidden_width(num_classes), num_classes],
        rng,
        hidden_activation="relu",
        output_activation="identity",
    )


@dataclass
class CoaeReport:
    """Training outcome recorded alongside a CoAe."""

    contra: float = float("nan")
    entropy: float = float("nan")
    total: float = float("nan")
    steps: int = 0
    attempts: int = 0
    seed: int = 0

    def to_dict(self) -> Dict:
        """Convert to a plain dictionary."""
        return asdict(self)


class CoAe:
    """Encoder/decoder pair, each c -> (6c)^2 -> c with a softmax on top."""

    def __init__(self, encoder: Mlp, decoder: Mlp, report: Optional[CoaeReport] = None):
        """Initialize the autoencoder.

        Args:
            encoder: Network producing fake-label logits from one-hot labels.
            decoder: Network producing true-label logits from soft labels.
            report: Training outcome, if trained.

        Raises:
            ShapeError: If the two halves are not c -> ... -> c for the same c.
        """
        c = encoder.in_dim
        if encoder.out_dim != c or decoder.in_dim != c or decoder.out_dim != c:
            raise ShapeError(
                f"encoder {encoder.dims} and decoder {decoder.dims} must map c -> c"
            )
        self.encoder = encoder
        self.decoder = decoder
        self.report = report or CoaeReport()

    @property
    def num_classes(self) -> int:
        """Class count c."""
        return self.encoder.in_dim

    @classmethod
    def identity(
        cls, num_classes: int, sharpness: float = IDENTITY_SHARPNESS
    ) -> "CoAe":
        """Degenerate disguise whose encoder and decoder approximate the identity.

        Each half routes input ``i`` through hidden unit ``i`` and scales it by
        ``sharpness`` before the softmax, so Enc(e_i) is e_i up to about
        exp(-sharpness) and the decoder preserves the argmax of any input.
        """
        if num_classes < 2:
            raise ContractError("a CoAe needs at least two classes")
        width = hidden_width(num_classes)
        halves = []
        for _ in range(2):
            w1 = np.zeros((num_classes, width))
            w1[np.arange(num_classes), np.arange(num_classes)] = 1.0
            w2 = np.zeros((width, num_classes))
            w2[np.arange(num_classes), np.arange(num_classes)] = sharpness
            halves.append(
                Mlp(
                    [
                        Dense(w1, np.zeros(width), "relu"),
                        Dense(w2, np.zeros(num_classes), "identity"),
                    ]
                )
            )
        return cls(halves[0], halves[1])

    def encode(self, labels_onehot: Array) -> Array:
        """Soft fake labels Enc(y), rows on the simplex."""
        return softmax(self.encoder(labels_onehot))

    def decode(self, soft: Array) -> Array:
        """Reconstructed label distributions Dec(soft)."""
        return softmax(self.decoder(soft))

    def gates(self) -> Dict[str, bool]:
        """Evaluate the acceptance gates exhaustively on all c basis labels.

        Returns:
            Dictionary with ``reconstruction``, ``contrast`` and ``confusion``
            flags.
        """
        eye = np.eye(self.num_classes)
        fake = self.encode(eye)
        classes = np.arange(self.num_classes)
        return {
            "reconstruction": bool(np.all(argmax_rows(self.decode(fake)) == classes)),
            "contrast": bool(np.all(argmax_rows(fake) != classes)),
            "confusion": bool(np.all(row_entropy(fake) >= CONFUSION_FLOOR)),
        }

    def class_entropies(self) -> Array:
        """Entropy of Enc(e_i) for every class i."""
        return row_entropy(self.encode(np.eye(self.num_classes)))

    def to_bytes(self) -> bytes:
        """Serialize to the versioned ``.coae`` binary layout.

        Layout: magic ``COAE``, u32 version, u32 c, then for encoder and
        decoder a u32 layer-dim count followed by the u32 dims, then all
        encoder and decoder parameters as little-endian float64 in flattening
        order.
        """
        parts = [MAGIC, struct.pack("<II", FORMAT_VERSION, self.num_classes)]
        for half in (self.encoder, self.decoder):
            dims = half.dims
            parts.append(struct.pack(f"<I{len(dims)}I", len(dims), *dims))
        for half in (self.encoder, self.decoder):
            parts.append(half.flatten().astype("<f8").tobytes())
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "CoAe":
        """Parse the ``.coae`` binary layout.

        Raises:
            FormatError: On bad magic, unsupported version or truncation; the
                message names the byte offset.
        """
        offset = 0

        def take(n: int) -> bytes:
            nonlocal offset
            if offset + n > len(blob):
                raise FormatError(
                    f"truncated .coae data: need {n} bytes", offset
                )
            chunk = blob[offset : offset + n]
            offset += n
            return chunk

        if take(4) != MAGIC:
            raise FormatError("bad magic, expected b'COAE'", 0)
        version, c = struct.unpack("<II", take(8))
        if version != FORMAT_VERSION:
            raise FormatError(f"unsupported .coae version {version}", 4)
        dims_per_half: List[List[int]] = []
        for _ in range(2):
            (count,) = struct.unpack("<I", take(4))
            dims_per_half.append(list(struct.unpack(f"<{count}I", take(4 * count))))
        halves = []
        for dims in dims_per_half:
            if len(dims) < 2 or dims[0] != c or dims[-1] != c:
                raise FormatError(f"layer dims {dims} do not map {c} -> {c}", offset)
            template = Mlp.create(dims, np.random.default_rng(0))
            raw = take(8 * template.parameter_count)
            halves.append(template.unflatten(np.frombuffer(raw, dtype="<f8")))
        if offset != len(blob):
            raise FormatError("unexpected trailing bytes", offset)
        return cls(halves[0], halves[1])

    def save(self, path: Union[str, Path]) -> Path:
        """Write the model to ``path``."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(self.to_bytes())
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> "CoAe":
        """Read a model written by ``save``."""
        return cls.from_bytes(Path(path).read_bytes())


def coae_losses(
    y: Array, y_fake: Array, y_hat: Array, lambda1: float, lambda2: float
) -> Dict[str, float]:
    """CoAE objective terms on a batch.

    L_contra = CE(y, y_hat) - lambda1 * CE(y, y_fake),
    L_entropy = Entropy(y_fake), L = L_contra - lambda2 * L_entropy.
    Logs are floored at 1e-12.

    Args:
        y: One-hot labels, [N, c].
        y_fake: Encoder outputs, [N, c].
        y_hat: Decoder outputs, [N, c].
        lambda1: Contrast weight.
        lambda2: Confusion weight.

    Returns:
        Dictionary with ``contra``, ``entropy`` and ``total``.
    """
    y = as_float_array(y, name="y")
    y_fake = as_float_array(y_fake, name="y_fake")
    y_hat = as_float_array(y_hat, name="y_hat")
    if not (y.shape == y_fake.shape == y_hat.shape):
        raise ShapeError(f"shapes differ: {y.shape}, {y_fake.shape}, {y_hat.shape}")
    contra = prob_cross_entropy(y, y_hat) - lambda1 * prob_cross_entropy(y, y_fake)
    ent = entropy(y_fake)
    return {"contra": contra, "entropy": ent, "total": contra - lambda2 * ent}


def _encoder_upstream(y: Array, y_fake: Array, lambda1: float, lambda2: float) -> Array:
    """d(-lambda1 CE(y, y_fake) - lambda2 Ent(y_fake))/d y_fake, per sample."""
    live = y_fake > LOG_FLOOR
    safe = np.where(live, y_fake, 1.0)
    d_contrast = lambda1 * np.where(live, y / safe, 0.0)
    d_confusion = lambda2 * (floored_log(y_fake) + live)
    return d_contrast + d_confusion


def _required_gates(lambda1: float, lambda2: float) -> List[str]:
    gates = ["reconstruction"]
    if lambda1 > 0:
        gates.append("contrast")
    if lambda2 >= 0.5:
        gates.append("confusion")
    return gates


def _train_once(
    num_classes: int,
    lambda1: float,
    lambda2: float,
    steps: int,
    batch_size: int,
    lr: float,
    seed: int,
) -> Optional[CoAe]:
    rng = np.random.default_rng(seed)
    coae = CoAe(_build_half(num_classes, rng), _build_half(num_classes, rng))
    params = coae.encoder.parameters() + coae.decoder.parameters()
    optimizer = ArrayOptimizer(params, lr=lr, kind="adam")
    required = _required_gates(lambda1, lambda2)
    snapshot = None

    for step in range(1, steps + 1):
        y = one_hot(rng.integers(0, num_classes, size=batch_size), num_classes)
        enc_acts = forward(coae.encoder, y)
        y_fake = softmax(enc_acts.output)
        dec_acts = forward(coae.decoder, y_fake)
        y_hat = softmax(dec_acts.output)

        dec_grads, d_fake = backward(
            coae.decoder, dec_acts, softmax_ce_grad(dec_acts.output, y)
        )
        upstream = d_fake + _encoder_upstream(y, y_fake, lambda1, lambda2)
        enc_grads, _ = backward(coae.encoder, enc_acts, softmax_vjp(y_fake, upstream))

        optimizer.step(enc_grads.tensors + dec_grads.tensors)
        coae.encoder.touch()
        coae.decoder.touch()

        gates = coae.gates()
        if all(gates[g] for g in required):
            losses = coae_losses(y, y_fake, y_hat, lambda1, lambda2)
            snapshot = (coae.encoder.flatten(), coae.decoder.flatten(), step, losses)
        if step % 500 == 0:
            logger.debug("coae step %d gates=%s", step, gates)

    if snapshot is None:
        return None
    enc_flat, dec_flat, step, losses = snapshot
    coae.encoder.load_flat(enc_flat)
    coae.decoder.load_flat(dec_flat)
    coae.report = CoaeReport(
        contra=losses["contra"],
        entropy=losses["entropy"],
        total=losses["total"],
        steps=step,
        seed=seed,
    )
    return coae


def train_coae(
    num_classes: int,
    lambda1: float = 1.0,
    lambda2: float = 1.0,
    epochs: int = 3000,
    batch_size: int = 64,
    lr: float = 1e-3,
    seed: int = 0,
    max_reseeds: int = 5,
) -> CoAe:
    """Train a CoAE on freshly sampled uniform one-hot labels.

    Gates are checked after every step on all c basis labels; the latest
    parameters passing every required gate are kept. Reconstruction is
    always required, contrast when ``lambda1 > 0`` and per-class confusion
    (entropy >= 0.5 ln 2) when ``lambda2 >= 0.5``.

    Args:
        num_classes: Class count c >= 2.
        lambda1: Contrast weight.
        lambda2: Confusion weight, >= 0.
        epochs: Optimizer steps per attempt.
        batch_size: Labels sampled per step.
        lr: Adam learning rate.
        seed: Base seed; reseeds use seed + attempt.
        max_reseeds: Extra attempts after the first one fails.

    Returns:
        An accepted CoAe.

    Raises:
        ContractError: On invalid arguments.
        TrainingFailureError: If no attempt passes the gates.
    """
    if num_classes < 2:
        raise ContractError("a CoAe needs at least two classes")
    if lambda2 < 0:
        raise ContractError(f"lambda2 must be non-negative, got {lambda2}")
    if epochs < 1 or batch_size < 1:
        raise ContractError("epochs and batch_size must be positive")
    for attempt in range(max_reseeds + 1):
        attempt_seed = seed + attempt
        coae = _train_once(
            num_classes, lambda1, lambda2, epochs, batch_size, lr, attempt_seed
        )
        if coae is not None:
            coae.report.attempts = attempt + 1
            logger.info(
                "trained CoAE c=%d lambda1=%s lambda2=%s in %d attempt(s), "
                "mean fake-label entropy %.3f",
                num_classes,
                lambda1,
                lambda2,
                attempt + 1,
                float(np.mean(coae.class_entropies())),
            )
            return coae
        logger.warning(
            "CoAE gates failed for c=%d seed=%d, reseeding", num_classes, attempt_seed
        )
    raise TrainingFailureError(
        f"CoAE c={num_classes} lambda1={lambda1} lambda2={lambda2} failed its "
        f"acceptance gates after {max_reseeds + 1} attempts"
    )


def coae_cache_key(
    num_classes: int, lambda1: float, lambda2: float, seed: int, **hyper
) -> str:
    """Stable file stem for a trained CoAE."""
    payload = dict(c=num_classes, lambda1=lambda1, lambda2=lambda2, seed=seed, **hyper)
    digest = hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()
    return f"coae_c{num_classes}_{digest[:16]}"


def load_or_train_coae(
    num_classes: int,
    lambda1: float = 1.0,
    lambda2: float = 1.0,
    seed: int = 0,
    cache_dir: Optional[Union[str, Path]] = None,
    **hyper,
) -> CoAe:
    """Reuse a cached CoAE or train and cache a new one.

    Args:
        num_classes: Class count.
        lambda1: Contrast weight.
        lambda2: Confusion weight.
        seed: Training seed.
        cache_dir: Cache directory; ``VFL_SHIELD_COAE_CACHE`` when omitted,
            no caching when neither is set.
        **hyper: Extra ``train_coae`` keyword arguments, part of the key.
    """
    cache_dir = cache_dir or os.getenv("VFL_SHIELD_COAE_CACHE")
    path = None
    if cache_dir:
        key = coae_cache_key(num_classes, lambda1, lambda2, seed, **hyper)
        path = Path(cache_dir) / f"{key}.coae"
        if path.exists():
            logger.info("loading cached CoAE from %s", path)
            return CoAe.load(path)
    coae = train_coae(num_classes, lambda1, lambda2, seed=seed, **hyper)
    if path is not None:
        coae.save(path)
    return coae


def coae_defended_grads(coae: CoAe, labels_onehot: Array, logits: Array) -> Array:
    """Per-sample gradients softmax(H) - Enc(y) against soft fake labels.

    Raises:
        ShapeError: If the class count differs from the CoAe's.
    """
    logits = as_float_array(logits, name="logits")
    labels_onehot = as_float_array(labels_onehot, name="labels")
    if logits.shape[1] != coae.num_classes or labels_onehot.shape != logits.shape:
        raise ShapeError(
            f"CoAe has {coae.num_classes} classes, got logits {logits.shape} "
            f"and labels {labels_onehot.shape}"
        )
    return softmax_ce_grad(logits, coae.encode(labels_onehot))


def coae_decode_predictions(coae: CoAe, probs: Array) -> Array:
    """True-class predictions argmax(Dec(f(H)))."""
    return argmax_rows(coae.decode(as_float_array(probs, name="probs")))


class CoaeDefense(BaseDefense):
    """Active-party CoAE mode: train against fake soft labels, decode predictions."""

    mode = "coae"

    def __init__(self, coae: CoAe):
        """Wrap a trained CoAe."""
        self.coae = coae

    def output_grads(self, logits, labels, rng):
        """Gradients against Enc(onehot(y))."""
        y = one_hot(labels, self.coae.num_classes)
        return coae_defended_grads(self.coae, y, logits)

    def decode(self, probs):
        """Decoder-reconstructed classes."""
        return coae_decode_predictions(self.coae, probs)
