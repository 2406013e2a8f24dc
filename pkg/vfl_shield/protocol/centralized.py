"""Centralized reference training of the composite model softmax(sum_k G_k(x^k))."""

import logging
from typing import List, Sequence

import numpy as np

from vfl_shield.errors import ShapeError
from vfl_shield.numerics.functional import Array, one_hot, softmax_ce_grad
from vfl_shield.numerics.mlp import Mlp, backward, forward
from vfl_shield.protocol.session import make_batch_plan

logger = logging.getLogger(__name__)


def train_centralized(
    models: Sequence[Mlp],
    views: Sequence[Array],
    labels: Array,
    batch_size: int,
    lr: float,
    epochs: int,
    seed: int,
) -> List[Mlp]:
    """Train all bottom models jointly on one machine, in place.

    Batch plans come from the same generator sequence as ``VflSession`` with
    the same seed, so an undefended, unattacked session with identical
    initial models follows the same trajectory.

    Args:
        models: Bottom models in party order (active last).
        views: Feature views in the same order.
        labels: Integer labels.
        batch_size: Samples per step.
        lr: Learning rate.
        epochs: Passes over the data.
        seed: Batch-plan seed.

    Returns:
        The trained models (the same objects).
    """
    if len(models) != len(views):
        raise ShapeError(f"{len(models)} models but {len(views)} views")
    labels = np.asarray(labels, dtype=np.int64)
    num_classes = models[0].out_dim
    rng = np.random.default_rng(seed)
    for epoch in range(epochs):
        for batch_ids in make_batch_plan(labels.shape[0], batch_size, rng):
            acts = [forward(m, np.asarray(v)[batch_ids]) for m, v in zip(models, views)]
            logits = acts[0].output
            for a in acts[1:]:
                logits = logits + a.output
            g = softmax_ce_grad(logits, one_hot(labels[batch_ids], num_classes))
            for model, a in zip(models, acts):
                bundle, _ = backward(model, a, g)
                model.sgd_step(bundle.flat(), lr)
        logger.debug("centralized epoch %d done", epoch + 1)
    return list(models)
