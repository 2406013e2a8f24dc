"""Passive-party attacks: label inference and gradient replacement."""

from vfl_shield.attacks.base_attack import PassiveAttack
from vfl_shield.attacks.gradient_replacement import (
    GradientReplacementBackdoor,
    GrBackdoorConfig,
    LabelReplacementAttack,
    active_label_poison,
    gr_backward_hook,
    gr_forward_hook,
    replace_gradient_label,
)
from vfl_shield.attacks.label_inference import (
    LabelInferenceResult,
    LabelInferenceState,
    MatchResult,
    enumerate_labels,
    infer_labels,
    label_from_gradient_sign,
    match_loss,
    recovery_rate,
    simulate_grad,
)

__all__ = [
    "GrBackdoorConfig",
    "GradientReplacementBackdoor",
    "LabelInferenceResult",
    "LabelInferenceState",
    "LabelReplacementAttack",
    "MatchResult",
    "PassiveAttack",
    "active_label_poison",
    "enumerate_labels",
    "gr_backward_hook",
    "gr_forward_hook",
    "infer_labels",
    "label_from_gradient_sign",
    "match_loss",
    "recovery_rate",
    "replace_gradient_label",
    "simulate_grad",
]
