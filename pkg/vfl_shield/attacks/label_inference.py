"""Batch label inference by gradient matching.

A passive party that decrypts the batch-mean gradient of its own bottom
model can recover per-sample labels: it optimizes dummy label logits ``u``
and a dummy foreign contribution ``H_a'`` until the gradient they induce on
its model matches the observed one.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from vfl_shield.errors import (
    AmbiguousGradientError,
    ContractError,
    DivergedError,
    NumericalError,
    ShapeError,
)
from vfl_shield.numerics.functional import (
    Array,
    argmax_rows,
    as_float_array,
    one_hot,
    softmax,
    softmax_ce_grad,
    softmax_vjp,
)
from vfl_shield.numerics.mlp import (
    Mlp,
    param_grad_adjoint,
    param_grad_from_output_grads,
)
from vfl_shield.numerics.optim import ArrayOptimizer

logger = logging.getLogger(__name__)


@dataclass
class LabelInferenceState:
    """Free variables of the matching problem.

    Attributes:
        u: Label logits, [B, c]; the dummy labels are softmax(u).
        h_foreign: Guessed contribution of the other parties, [B, c].
        step: Optimizer iterations performed.
    """

    u: Array
    h_foreign: Array
    step: int = 0

    def __post_init__(self):
        self.u = np.ascontiguousarray(self.u, dtype=np.float64)
        self.h_foreign = np.ascontiguousarray(self.h_foreign, dtype=np.float64)
        if self.u.ndim != 2 or self.u.shape != self.h_foreign.shape:
            raise ShapeError(f"u {self.u.shape} and H_a' {self.h_foreign.shape} differ")

    @classmethod
    def random(cls, batch_size: int, num_classes: int, rng: np.random.Generator):
        """Standard-normal initialization of both variables."""
        return cls(
            u=rng.standard_normal((batch_size, num_classes)),
            h_foreign=rng.standard_normal((batch_size, num_classes)),
        )

    @property
    def dummy_labels(self) -> Array:
        """y' = softmax(u), rows on the simplex."""
        return softmax(self.u)

    def labels(self) -> Array:
        """Predicted class per batch slot."""
        return argmax_rows(self.u)


@dataclass
class MatchResult:
    """Distance between simulated and observed gradients and its derivatives."""

    distance: float
    grad_u: Array
    grad_h_foreign: Array


@dataclass
class LabelInferenceResult:
    """Outcome of ``infer_labels``."""

    labels: Array
    d_final: float
    state: LabelInferenceState
    history: List[float] = field(default_factory=list)


def _check_batch(state: LabelInferenceState, model: Mlp, x: Array, h_local: Array):
    if h_local.shape != state.u.shape:
        raise ShapeError(f"H_p {h_local.shape} vs state {state.u.shape}")
    if x.shape[0] != h_local.shape[0] or h_local.shape[1] != model.out_dim:
        raise ShapeError(f"batch x {x.shape} does not produce H_p {h_local.shape}")


def simulate_grad(
    state: LabelInferenceState, model: Mlp, x: Array, h_local: Array
) -> Array:
    """Gradient of CE(softmax(H_p + H_a'), y') w.r.t. the passive parameters.

    Args:
        state: Current dummy labels and foreign contribution.
        model: The attacker's bottom model.
        x: The attacker's batch features.
        h_local: ``model(x)``.

    Returns:
        Flat batch-mean parameter gradient.
    """
    x = as_float_array(x, name="x")
    h_local = as_float_array(h_local, name="h_local")
    _check_batch(state, model, x, h_local)
    g = softmax_ce_grad(h_local + state.h_foreign, state.dummy_labels)
    return param_grad_from_output_grads(model, x, g)


def match_loss(
    simulated: Array,
    observed: Array,
    state: LabelInferenceState,
    model: Mlp,
    x: Array,
    h_local: Array,
) -> MatchResult:
    """D = ||simulated - observed||^2 and its gradients w.r.t. u and H_a'.

    With r = simulated - observed, dD/dg_i = 2 (1/B) J_i r, which is pulled
    back through the softmax Jacobians of the fused prediction (for H_a')
    and of the dummy labels (for u, with a minus sign).

    Raises:
        ShapeError: If the gradient vectors differ in length.
    """
    simulated = np.asarray(simulated, dtype=np.float64).reshape(-1)
    observed = np.asarray(observed, dtype=np.float64).reshape(-1)
    if simulated.shape != observed.shape:
        raise ShapeError(
            f"simulated gradient has {simulated.size} entries, observed {observed.size}"
        )
    r = simulated - observed
    distance = float(r @ r)
    d_g = 2.0 * param_grad_adjoint(model, x, r)
    fused = softmax(h_local + state.h_foreign)
    return MatchResult(
        distance=distance,
        grad_u=-softmax_vjp(state.dummy_labels, d_g),
        grad_h_foreign=softmax_vjp(fused, d_g),
    )


def infer_labels(
    observed: Array,
    model: Mlp,
    x: Array,
    iters: int = 2000,
    lr: float = 0.01,
    seed: int = 0,
    optimizer: str = "adam",
    init: Optional[LabelInferenceState] = None,
) -> LabelInferenceResult:
    """Recover batch labels from an observed batch-mean gradient.

    Args:
        observed: Decrypted flat gradient of ``model`` for this exact batch
            and parameter snapshot.
        model: The attacker's bottom model (not modified).
        x: The attacker's features for the batch.
        iters: Optimizer iterations.
        lr: Learning rate.
        seed: Seed of the N(0, 1) initialization.
        optimizer: ``"adam"`` or ``"sgd"`` (plain gradient descent).
        init: Starting state; drawn from ``seed`` if omitted.

    Returns:
        Predicted label per slot, the final distance and the D trace.

    Raises:
        DivergedError: If the objective becomes non-finite.
    """
    x = as_float_array(x, name="x")
    observed = np.asarray(observed, dtype=np.float64).reshape(-1)
    if observed.size != model.parameter_count:
        raise ShapeError(
            f"observed gradient has {observed.size} entries, model has "
            f"{model.parameter_count}"
        )
    h_local = model(x)
    rng = np.random.default_rng(seed)
    state = init or LabelInferenceState.random(x.shape[0], model.out_dim, rng)
    opt = ArrayOptimizer([state.u, state.h_foreign], lr=lr, kind=optimizer)
    history: List[float] = []

    def evaluate(iteration: int) -> MatchResult:
        try:
            sim = simulate_grad(state, model, x, h_local)
            res = match_loss(sim, observed, state, model, x, h_local)
        except NumericalError as exc:
            raise DivergedError(f"label inference diverged: {exc}", iteration) from exc
        if not np.isfinite(res.distance):
            raise DivergedError("label inference objective is not finite", iteration)
        return res

    for it in range(iters):
        res = evaluate(it)
        history.append(res.distance)
        opt.step([res.grad_u, res.grad_h_foreign])
        state.step += 1
        if it % 500 == 0:
            logger.debug("label inference iter %d D=%.3e", it, res.distance)
    final = evaluate(iters)
    return LabelInferenceResult(
        labels=state.labels(), d_final=final.distance, state=state, history=history
    )


def _fit_foreign(
    observed: Array,
    model: Mlp,
    x: Array,
    h_local: Array,
    labels_onehot: Array,
    iters: int,
    lr: float,
    rng: np.random.Generator,
) -> float:
    h_foreign = np.ascontiguousarray(rng.standard_normal(h_local.shape))
    opt = ArrayOptimizer([h_foreign], lr=lr, kind="adam")
    distance = float("inf")
    for _ in range(iters + 1):
        g = softmax_ce_grad(h_local + h_foreign, labels_onehot)
        r = param_grad_from_output_grads(model, x, g) - observed
        distance = float(r @ r)
        if opt.steps == iters:
            break
        d_g = 2.0 * param_grad_adjoint(model, x, r)
        opt.step([softmax_vjp(softmax(h_local + h_foreign), d_g)])
    return distance


def enumerate_labels(
    observed: Array,
    model: Mlp,
    x: Array,
    iters: int = 1000,
    lr: float = 0.05,
    seed: int = 0,
) -> Tuple[Array, Dict[Tuple[int, ...], float]]:
    """Brute-force oracle: best labeling over all c^B candidates.

    For each candidate labeling the dummy labels are fixed one-hot and only
    H_a' is optimized. Only feasible for small B and c.

    Returns:
        The labeling with the smallest final distance and the distance of
        every candidate.
    """
    x = as_float_array(x, name="x")
    observed = np.asarray(observed, dtype=np.float64).reshape(-1)
    batch, c = x.shape[0], model.out_dim
    if c**batch > 4096:
        raise ContractError(f"{c}^{batch} candidate labelings is too many to enumerate")
    h_local = model(x)
    distances: Dict[Tuple[int, ...], float] = {}
    for candidate in itertools.product(range(c), repeat=batch):
        rng = np.random.default_rng(seed)
        distances[candidate] = _fit_foreign(
            observed, model, x, h_local, one_hot(candidate, c), iters, lr, rng
        )
    best = min(distances, key=distances.get)
    return np.asarray(best, dtype=np.int64), distances


def label_from_gradient_sign(g: Array) -> int:
    """Label of a plaintext per-sample gradient softmax(z) - onehot(y).

    Raises:
        AmbiguousGradientError: Unless exactly one component is negative.
    """
    g = np.asarray(g, dtype=np.float64).reshape(-1)
    negative = np.flatnonzero(g < 0)
    if negative.size != 1:
        raise AmbiguousGradientError(
            f"expected exactly one negative component, found {negative.size}"
        )
    return int(negative[0])


def recovery_rate(predicted: Array, truth: Array) -> float:
    """Fraction of batch slots whose label was recovered."""
    predicted = np.asarray(predicted)
    truth = np.asarray(truth)
    if predicted.shape != truth.shape or predicted.size == 0:
        raise ShapeError(f"cannot compare {predicted.shape} with {truth.shape}")
    return float(np.mean(predicted == truth))
