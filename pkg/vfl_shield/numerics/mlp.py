"""Small feed-forward networks with explicit forward and backward passes.

Weights are stored as ``(in_dim, out_dim)`` matrices so a layer computes
``z = a @ W + b``. Parameters flatten in a fixed order: layer 0 weights
(row-major), layer 0 bias, layer 1 weights, layer 1 bias, and so on.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from vfl_shield.errors import ContractError, ShapeError
from vfl_shield.numerics.functional import Array, as_float_array, check_finite

ACTIVATIONS = ("relu", "identity")

_instance_ids = itertools.count()


@dataclass
class Dense:
    """One fully-connected layer."""

    weight: Array
    bias: Array
    activation: str = "relu"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ContractError(f"unsupported activation {self.activation!r}")
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[1],):
            raise ShapeError(
                f"weight {self.weight.shape} and bias {self.bias.shape} disagree"
            )


class Mlp:
    """Feed-forward network of Dense layers with relu or identity activations."""

    def __init__(self, layers: Sequence[Dense]):
        """Initialize the network.

        Args:
            layers: Layers in evaluation order; consecutive dims must match.

        Raises:
            ContractError: If there are no parameters.
            ShapeError: If consecutive layer dimensions disagree.
        """
        if not layers:
            raise ContractError("an Mlp needs at least one layer")
        for prev, nxt in zip(layers, layers[1:]):
            if prev.weight.shape[1] != nxt.weight.shape[0]:
                raise ShapeError(
                    f"layer output {prev.weight.shape[1]} does not feed "
                    f"input {nxt.weight.shape[0]}"
                )
        self.layers: List[Dense] = [
            Dense(
                np.ascontiguousarray(layer.weight, dtype=np.float64),
                np.ascontiguousarray(layer.bias, dtype=np.float64),
                layer.activation,
            )
            for layer in layers
        ]
        self._uid = next(_instance_ids)
        self._version = 0

    @classmethod
    def create(
        cls,
        dims: Sequence[int],
        rng: np.random.Generator,
        hidden_activation: str = "relu",
        output_activation: str = "identity",
    ) -> "Mlp":
        """Build a network with Xavier-uniform weights and zero biases.

        Args:
            dims: Layer widths, input first, e.g. ``[392, 32, 10]``.
            rng: Seeded generator.
            hidden_activation: Activation after every layer but the last.
            output_activation: Activation after the last layer.

        Returns:
            A freshly initialized Mlp.
        """
        if len(dims) < 2:
            raise ContractError("dims needs at least input and output width")
        layers = []
        for i, (fan_in, fan_out) in enumerate(zip(dims, dims[1:])):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            weight = rng.uniform(-limit, limit, size=(fan_in, fan_out))
            last = i == len(dims) - 2
            layers.append(
                Dense(
                    weight,
                    np.zeros(fan_out),
                    output_activation if last else hidden_activation,
                )
            )
        return cls(layers)

    @property
    def in_dim(self) -> int:
        """Input width."""
        return self.layers[0].weight.shape[0]

    @property
    def out_dim(self) -> int:
        """Output width."""
        return self.layers[-1].weight.shape[1]

    @property
    def dims(self) -> List[int]:
        """Layer widths, input first."""
        return [self.in_dim] + [layer.weight.shape[1] for layer in self.layers]

    @property
    def activations(self) -> List[str]:
        """Activation name per layer."""
        return [layer.activation for layer in self.layers]

    @property
    def version(self) -> int:
        """Counter bumped on every in-place parameter change."""
        return self._version

    @property
    def parameter_count(self) -> int:
        """Total number of scalar parameters."""
        return sum(layer.weight.size + layer.bias.size for layer in self.layers)

    def parameters(self) -> List[Array]:
        """Parameter arrays (shared, not copied) in flattening order."""
        out = []
        for layer in self.layers:
            out.extend([layer.weight, layer.bias])
        return out

    def flatten(self) -> Array:
        """Concatenate all parameters into one flat vector."""
        return np.concatenate([p.reshape(-1) for p in self.parameters()])

    def split_flat(self, flat: Array) -> List[Array]:
        """Cut a flat vector into arrays shaped like ``parameters()``."""
        flat = np.asarray(flat, dtype=np.float64).reshape(-1)
        if flat.size != self.parameter_count:
            raise ShapeError(
                f"flat vector has {flat.size} entries, model has "
                f"{self.parameter_count}"
            )
        pieces, start = [], 0
        for p in self.parameters():
            pieces.append(flat[start : start + p.size].reshape(p.shape))
            start += p.size
        return pieces

    def unflatten(self, flat: Array) -> "Mlp":
        """Return a new Mlp with this architecture and the given parameters."""
        pieces = self.split_flat(flat)
        layers = [
            Dense(pieces[2 * i].copy(), pieces[2 * i + 1].copy(), layer.activation)
            for i, layer in enumerate(self.layers)
        ]
        return Mlp(layers)

    def load_flat(self, flat: Array) -> None:
        """Overwrite parameters in place from a flat vector."""
        for dst, src in zip(self.parameters(), self.split_flat(flat)):
            dst[...] = src
        self.touch()

    def sgd_step(self, grad_flat: Array, learning_rate: float) -> None:
        """Apply theta <- theta - lr * grad in place."""
        for p, g in zip(self.parameters(), self.split_flat(grad_flat)):
            p -= learning_rate * g
        self.touch()

    def touch(self) -> None:
        """Mark parameters as changed so older activations become stale."""
        self._version += 1

    def copy(self) -> "Mlp":
        """Deep copy with a fresh identity."""
        return self.unflatten(self.flatten())

    def __call__(self, x: Array) -> Array:
        """Shortcut for ``forward(self, x).output``."""
        return forward(self, x).output


@dataclass
class Activations:
    """Everything a forward pass retains for the backward pass."""

    inputs: List[Array]
    pre_activations: List[Array]
    output: Array
    model_uid: int = field(repr=False)
    model_version: int = field(repr=False)

    @property
    def layer_outputs(self) -> List[Array]:
        """Output of every layer; the last one is H."""
        return self.inputs[1:] + [self.output]

    @property
    def batch_size(self) -> int:
        """Number of rows in the forward batch."""
        return self.inputs[0].shape[0]


@dataclass
class GradBundle:
    """Per-parameter gradients in the Mlp flattening order."""

    tensors: List[Array]

    def flat(self) -> Array:
        """Flat view matching ``Mlp.flatten``."""
        return np.concatenate([t.reshape(-1) for t in self.tensors])

    @property
    def size(self) -> int:
        """Total number of entries."""
        return sum(t.size for t in self.tensors)


def _relu(z: Array) -> Array:
    return np.maximum(z, 0.0)


def forward(mlp: Mlp, x: Array) -> Activations:
    """Evaluate the network on a batch and keep intermediate values.

    Args:
        mlp: The network.
        x: Inputs of shape [batch, in_dim].

    Returns:
        Activations whose ``output`` is H, shape [batch, out_dim].

    Raises:
        ShapeError: If ``x`` does not have ``mlp.in_dim`` columns.
    """
    x = as_float_array(x, name="x")
    if x.shape[1] != mlp.in_dim:
        raise ShapeError(f"expected {mlp.in_dim} input features, got {x.shape[1]}")
    inputs, pre = [], []
    a = x
    for layer in mlp.layers:
        inputs.append(a)
        z = a @ layer.weight + layer.bias
        pre.append(z)
        a = _relu(z) if layer.activation == "relu" else z
    check_finite(a, "forward output")
    return Activations(inputs, pre, a, mlp._uid, mlp.version)


def backward(
    mlp: Mlp, activations: Activations, out_grad: Array
) -> Tuple[GradBundle, Array]:
    """Backpropagate per-sample output gradients.

    Args:
        mlp: The network that produced ``activations``.
        activations: Result of ``forward`` on the current parameters.
        out_grad: dloss_i/dH_i for every sample, shape [batch, out_dim].

    Returns:
        The batch-mean parameter gradient and the per-sample input gradient
        (not averaged), shape [batch, in_dim].

    Raises:
        ContractError: If the activations come from another model or an older
            parameter version.
        ShapeError: If ``out_grad`` does not match the forward output.
    """
    if activations.model_uid != mlp._uid or activations.model_version != mlp.version:
        raise ContractError("activations are stale or belong to another model")
    out_grad = as_float_array(out_grad, name="out_grad")
    if out_grad.shape != activations.output.shape:
        raise ShapeError(
            f"out_grad {out_grad.shape} vs output {activations.output.shape}"
        )
    batch = activations.batch_size
    delta = out_grad
    tensors: List[Array] = []
    for layer, a_in, z in zip(
        reversed(mlp.layers),
        reversed(activations.inputs),
        reversed(activations.pre_activations),
    ):
        if layer.activation == "relu":
            delta = delta * (z > 0.0)
        tensors.append(delta.sum(axis=0) / batch)
        tensors.append(a_in.T @ delta / batch)
        delta = delta @ layer.weight.T
    tensors.reverse()
    check_finite(delta, "input gradient")
    return GradBundle(tensors), delta


def param_grad_from_output_grads(mlp: Mlp, x: Array, g: Array) -> Array:
    """Flat batch-mean parameter gradient (1/B) sum_i J_i^T g_i.

    J_i is the Jacobian of H_i with respect to the flattened parameters.
    The map is linear in ``g``.
    """
    acts = forward(mlp, x)
    bundle, _ = backward(mlp, acts, g)
    return bundle.flat()


def param_grad_adjoint(mlp: Mlp, x: Array, r: Array) -> Array:
    """Adjoint of ``param_grad_from_output_grads`` with respect to ``g``.

    Returns rows (1/B) J_i r, so that
    <param_grad_from_output_grads(g), r> == <g, param_grad_adjoint(r)>.

    Args:
        mlp: The network.
        x: Inputs, shape [batch, in_dim].
        r: Flat parameter-space direction of length ``mlp.parameter_count``.

    Returns:
        Array of shape [batch, out_dim].
    """
    x = as_float_array(x, name="x")
    if x.shape[1] != mlp.in_dim:
        raise ShapeError(f"expected {mlp.in_dim} input features, got {x.shape[1]}")
    pieces = mlp.split_flat(r)
    a = x
    da = np.zeros_like(x)
    for i, layer in enumerate(mlp.layers):
        d_weight, d_bias = pieces[2 * i], pieces[2 * i + 1]
        z = a @ layer.weight + layer.bias
        dz = a @ d_weight + d_bias + da @ layer.weight
        if layer.activation == "relu":
            mask = z > 0.0
            a, da = z * mask, dz * mask
        else:
            a, da = z, dz
    return check_finite(da / x.shape[0], "adjoint output")


def mlp_from_layers(
    weights: Sequence[Array],
    biases: Optional[Sequence[Array]] = None,
    activations: Optional[Sequence[str]] = None,
) -> Mlp:
    """Convenience constructor from explicit weight matrices."""
    biases = biases or [np.zeros(w.shape[1]) for w in weights]
    activations = activations or ["relu"] * (len(weights) - 1) + ["identity"]
    return Mlp(
        [
            Dense(np.asarray(w, float), np.asarray(b, float), act)
            for w, b, act in zip(weights, biases, activations)
        ]
    )
