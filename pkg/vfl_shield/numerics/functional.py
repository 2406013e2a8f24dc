"""Softmax, cross-entropy and other stateless helpers on float64 arrays."""

from typing import Callable

import numpy as np

from vfl_shield.errors import ContractError, NumericalError, OracleError, ShapeError

Array = np.ndarray

LOG_FLOOR = 1e-12
_ROW_SUM_TOL = 1e-9


def as_float_array(x, ndim: int = 2, name: str = "array") -> Array:
    """Convert input to a float64 array of the given rank.

    Args:
        x: Array-like input.
        ndim: Required number of dimensions.
        name: Name used in error messages.

    Returns:
        A float64 ndarray.

    Raises:
        ShapeError: If the rank does not match.
    """
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != ndim:
        raise ShapeError(f"{name} must be {ndim}-D, got shape {arr.shape}")
    return arr


def check_finite(arr: Array, what: str) -> Array:
    """Raise NumericalError if ``arr`` holds NaN or Inf, else return it."""
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"non-finite values in {what}")
    return arr


def softmax(logits: Array) -> Array:
    """Row-wise softmax with the row maximum subtracted first."""
    z = np.asarray(logits, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: Array) -> Array:
    """Row-wise log-softmax via log-sum-exp."""
    z = np.asarray(logits, dtype=np.float64)
    m = z.max(axis=-1, keepdims=True)
    return z - m - np.log(np.exp(z - m).sum(axis=-1, keepdims=True))


def softmax_vjp(probs: Array, upstream: Array) -> Array:
    """Pull ``upstream`` back through softmax given its output ``probs``.

    Computes (diag(S) - S S^T) v row by row, the softmax Jacobian being
    symmetric.
    """
    dot = np.sum(probs * upstream, axis=-1, keepdims=True)
    return probs * (upstream - dot)


def one_hot(labels, num_classes: int) -> Array:
    """Encode integer labels as float64 one-hot rows."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ContractError(f"labels must lie in [0, {num_classes})")
    out = np.zeros((labels.shape[0], num_classes), dtype=np.float64)
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def argmax_rows(x: Array) -> Array:
    """Row-wise argmax; ties resolve to the lowest index."""
    return np.argmax(np.asarray(x), axis=-1).astype(np.int64)


def _check_targets(target: Array) -> None:
    sums = target.sum(axis=-1)
    if not np.allclose(sums, 1.0, rtol=0.0, atol=_ROW_SUM_TOL):
        raise ContractError("target rows must sum to 1")


def cross_entropy(logits: Array, target: Array) -> float:
    """Batch-mean cross-entropy of softmax(logits) against soft targets."""
    logits = as_float_array(logits, name="logits")
    target = as_float_array(target, name="target")
    if logits.shape != target.shape:
        raise ShapeError(f"logits {logits.shape} vs target {target.shape}")
    _check_targets(target)
    return float(-np.mean(np.sum(target * log_softmax(logits), axis=-1)))


def softmax_ce_grad(logits: Array, target: Array) -> Array:
    """Per-sample gradient of CE(softmax(logits), target) w.r.t. the logits.

    Args:
        logits: Fused logits, shape [batch, c].
        target: Soft or one-hot targets, shape [batch, c], rows summing to 1.

    Returns:
        softmax(logits) - target, shape [batch, c].

    Raises:
        ShapeError: If the shapes differ.
        ContractError: If a target row is not normalized.
    """
    logits = as_float_array(logits, name="logits")
    target = as_float_array(target, name="target")
    if logits.shape != target.shape:
        raise ShapeError(f"logits {logits.shape} vs target {target.shape}")
    _check_targets(target)
    return check_finite(softmax(logits) - target, "softmax_ce_grad")


def floored_log(p: Array) -> Array:
    """Natural log with probabilities floored at LOG_FLOOR."""
    return np.log(np.maximum(p, LOG_FLOOR))


def prob_cross_entropy(target: Array, probs: Array) -> float:
    """Batch-mean CE between targets and already-normalized probabilities."""
    return float(-np.mean(np.sum(target * floored_log(probs), axis=-1)))


def entropy(probs: Array) -> float:
    """Batch-mean Shannon entropy (nats) of probability rows."""
    return float(np.mean(row_entropy(probs)))


def row_entropy(probs: Array) -> Array:
    """Shannon entropy (nats) of each probability row."""
    probs = np.asarray(probs, dtype=np.float64)
    return -np.sum(probs * floored_log(probs), axis=-1)


def clip_l2(v: Array, c: float) -> Array:
    """Scale ``v`` so that its L2 norm is at most ``c``.

    Args:
        v: Flat vector.
        c: Positive clipping bound.

    Returns:
        v * min(1, c / ||v||). The zero vector maps to itself.
    """
    if c <= 0:
        raise ContractError(f"clip bound must be positive, got {c}")
    v = np.asarray(v, dtype=np.float64)
    norm = float(np.linalg.norm(v))
    if norm <= c:
        return v.copy()
    return v * (c / norm)


def finite_difference_grad(
    f: Callable[[Array], float], v: Array, eps: float = 1e-5
) -> Array:
    """Central finite-difference gradient of a scalar function.

    Args:
        f: Scalar function of a flat vector.
        v: Point at which to differentiate.
        eps: Step size.

    Returns:
        Vector whose j-th entry is (f(v + eps e_j) - f(v - eps e_j)) / (2 eps).

    Raises:
        ContractError: If eps is not positive.
        OracleError: If any evaluation of f is not finite.
    """
    if eps <= 0:
        raise ContractError(f"eps must be positive, got {eps}")
    v = np.asarray(v, dtype=np.float64)
    flat = v.reshape(-1).copy()
    grad = np.empty_like(flat)
    for j in range(flat.size):
        orig = flat[j]
        flat[j] = orig + eps
        up = float(f(flat.reshape(v.shape)))
        flat[j] = orig - eps
        down = float(f(flat.reshape(v.shape)))
        flat[j] = orig
        if not (np.isfinite(up) and np.isfinite(down)):
            raise OracleError(f"non-finite function value at coordinate {j}")
        grad[j] = (up - down) / (2.0 * eps)
    return grad.reshape(v.shape)
