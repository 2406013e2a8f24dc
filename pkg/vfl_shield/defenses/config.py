"""Defense selection for the active party."""

from dataclasses import asdict, dataclass, field
from typing import Dict, Optional

from vfl_shield.defenses.base_defense import BaseDefense, NoDefense
from vfl_shield.defenses.coae import CoaeDefense, load_or_train_coae
from vfl_shield.defenses.noise import DEFAULT_CLIP, DpNoiseDefense, SparsifyDefense
from vfl_shield.errors import ConfigError

DEFENSE_MODES = ("none", "coae", "dp_gaussian", "dp_laplace", "sparsify")


@dataclass
class CoaeTrainingConfig:
    """CoAE optimizer settings."""

    epochs: int = 3000
    batch_size: int = 64
    lr: float = 1e-3
    seed: int = 0


@dataclass
class DefenseConfig:
    """Active-party defense parameters.

    Attributes:
        mode: One of ``DEFENSE_MODES``.
        sigma: Gaussian noise std for ``dp_gaussian``.
        laplace_b: Laplace scale for ``dp_laplace``.
        clip: L2 clip bound applied before noise.
        drop_rate: Sparsification drop rate s in [0, 1).
        lambda1: CoAE contrast weight.
        lambda2: CoAE confusion weight.
        coae: CoAE training settings.
    """

    mode: str = "none"
    sigma: float = 0.01
    laplace_b: float = 0.01
    clip: float = DEFAULT_CLIP
    drop_rate: float = 0.99
    lambda1: float = 1.0
    lambda2: float = 1.0
    coae: CoaeTrainingConfig = field(default_factory=CoaeTrainingConfig)

    def validate(self, path: str = "defense") -> None:
        """Raise ConfigError on out-of-range values."""
        if self.mode not in DEFENSE_MODES:
            raise ConfigError(f"unknown defense mode {self.mode!r}", f"{path}.mode")
        if self.mode == "dp_gaussian" and self.sigma <= 0:
            raise ConfigError("must be positive", f"{path}.sigma")
        if self.mode == "dp_laplace" and self.laplace_b <= 0:
            raise ConfigError("must be positive", f"{path}.laplace_b")
        if self.clip <= 0:
            raise ConfigError("must be positive", f"{path}.clip")
        if not 0.0 <= self.drop_rate < 1.0:
            raise ConfigError("must lie in [0, 1)", f"{path}.drop_rate")
        if self.lambda2 < 0:
            raise ConfigError("must be non-negative", f"{path}.lambda2")

    def to_dict(self) -> Dict:
        """Convert to a plain dictionary."""
        return asdict(self)


def build_defense(
    config: DefenseConfig, num_classes: int, cache_dir: Optional[str] = None
) -> BaseDefense:
    """Instantiate the defense ``config`` describes.

    CoAE mode trains (or loads from ``cache_dir``) the disguise model.
    """
    config.validate()
    if config.mode == "none":
        return NoDefense()
    if config.mode == "dp_gaussian":
        return DpNoiseDefense("gaussian", config.sigma, config.clip)
    if config.mode == "dp_laplace":
        return DpNoiseDefense("laplace", config.laplace_b, config.clip)
    if config.mode == "sparsify":
        return SparsifyDefense(config.drop_rate)
    coae = load_or_train_coae(
        num_classes,
        lambda1=config.lambda1,
        lambda2=config.lambda2,
        seed=config.coae.seed,
        cache_dir=cache_dir,
        epochs=config.coae.epochs,
        batch_size=config.coae.batch_size,
        lr=config.coae.lr,
    )
    return CoaeDefense(coae)
