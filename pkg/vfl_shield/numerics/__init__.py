"""Dense float64 numerics: MLPs, softmax/cross-entropy and gradient oracles."""

from vfl_shield.numerics.functional import (
    argmax_rows,
    clip_l2,
    cross_entropy,
    entropy,
    finite_difference_grad,
    log_softmax,
    one_hot,
    row_entropy,
    softmax,
    softmax_ce_grad,
    softmax_vjp,
)
from vfl_shield.numerics.mlp import (
    Activations,
    Dense,
    GradBundle,
    Mlp,
    backward,
    forward,
    param_grad_adjoint,
    param_grad_from_output_grads,
)
from vfl_shield.numerics.optim import ArrayOptimizer

__all__ = [
    "Activations",
    "ArrayOptimizer",
    "Dense",
    "GradBundle",
    "Mlp",
    "argmax_rows",
    "backward",
    "clip_l2",
    "cross_entropy",
    "entropy",
    "finite_difference_grad",
    "forward",
    "log_softmax",
    "one_hot",
    "param_grad_adjoint",
    "param_grad_from_output_grads",
    "row_entropy",
    "softmax",
    "softmax_ce_grad",
    "softmax_vjp",
]
