"""Active-party defenses: CoAE label disguise, DP noise and sparsification."""

from vfl_shield.defenses.base_defense import BaseDefense, NoDefense
from vfl_shield.defenses.coae import (
    CoAe,
    CoaeDefense,
    CoaeReport,
    coae_decode_predictions,
    coae_defended_grads,
    coae_losses,
    load_or_train_coae,
    train_coae,
)
from vfl_shield.defenses.config import (
    DEFENSE_MODES,
    CoaeTrainingConfig,
    DefenseConfig,
    build_defense,
)
from vfl_shield.defenses.noise import (
    DpNoiseDefense,
    SparsifyDefense,
    dp_noise,
    sparsify,
)
from vfl_shield.defenses.pd_matrix import PdMatrix, pd_matrix

__all__ = [
    "BaseDefense",
    "CoAe",
    "CoaeDefense",
    "CoaeReport",
    "CoaeTrainingConfig",
    "DEFENSE_MODES",
    "DefenseConfig",
    "DpNoiseDefense",
    "NoDefense",
    "PdMatrix",
    "SparsifyDefense",
    "build_defense",
    "coae_decode_predictions",
    "coae_defended_grads",
    "coae_losses",
    "dp_noise",
    "load_or_train_coae",
    "pd_matrix",
    "sparsify",
    "train_coae",
]
