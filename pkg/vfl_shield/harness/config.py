"""Experiment configuration: JSON files parsed into nested dataclasses."""

from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union, get_type_hints

from vfl_shield.data.mnist import find_mnist_files
from vfl_shield.defenses.config import DefenseConfig
from vfl_shield.errors import ConfigError

DATASETS = ("blobs", "mnist")
PARTITION_KINDS = ("auto", "even", "image_columns")
ATTACKS = (
    "none",
    "label_inference",
    "grad_replacement",
    "label_replacement",
    "active_poison",
)
INFERENCE_OPTIMIZERS = ("adam", "sgd")

# dataset-dependent training defaults
DEFAULT_EPOCHS = {"mnist": 10, "blobs": 30}
DEFAULT_LR = {"mnist": 0.05, "blobs": 0.1}

HASH_EXCLUDED = ("seed", "repeats")


@dataclass
class DatasetConfig:
    """Where samples come from.

    Attributes:
        name: ``"blobs"`` or ``"mnist"``.
        data_dir: MNIST directory; ``VFL_SHIELD_DATA_DIR`` when unset.
        train_size: Optional train subsample size.
        test_size: Optional test subsample size.
        num_classes: Blob class count.
        num_features: Blob feature count.
        n_per_class: Blob samples per class (train and test together).
        spread: Blob standard deviation.
        test_fraction: Blob test share.
        seed: Data generation and subsampling seed.
    """

    name: str = "blobs"
    data_dir: Optional[str] = None
    train_size: Optional[int] = None
    test_size: Optional[int] = None
    num_classes: int = 10
    num_features: int = 20
    n_per_class: int = 100
    spread: float = 0.1
    test_fraction: float = 0.2
    seed: int = 0


@dataclass
class PartitionConfig:
    """Vertical split of the features."""

    num_parties: int = 2
    kind: str = "auto"


@dataclass
class ModelConfig:
    """Hidden widths of every bottom model; empty for linear models."""

    hidden: List[int] = field(default_factory=lambda: [32])


@dataclass
class TrainingConfig:
    """Protocol training knobs; ``None`` picks the dataset default."""

    epochs: Optional[int] = None
    batch_size: int = 64
    lr: Optional[float] = None


@dataclass
class AttackConfig:
    """Attack selection and parameters.

    Attributes:
        kind: One of ``ATTACKS``.
        iters: Label-inference optimizer iterations.
        lr: Label-inference learning rate.
        optimizer: ``"adam"`` or ``"sgd"``.
        batch_size: Batch size of attacked rounds.
        rounds: Number of attacked rounds.
        target_label: Backdoor target tau.
        num_targets: Size of the target set.
        poison_train: Triggered training samples.
        poison_test: Triggered test samples.
        gamma: Amplify rate.
        random_h: Random outputs for backdoor samples.
        distributed: Every passive party attacks with one trigger piece.
        attacker: Attacking passive party; the last passive party if unset.
    """

    kind: str = "none"
    iters: int = 2000
    lr: float = 0.01
    optimizer: str = "adam"
    batch_size: int = 4
    rounds: int = 10
    target_label: int = 0
    num_targets: int = 10
    poison_train: int = 600
    poison_test: int = 100
    gamma: float = 10.0
    random_h: bool = False
    distributed: bool = False
    attacker: Optional[int] = None


@dataclass
class ExperimentConfig:
    """One experiment: data, parties, training, attack and defense."""

    name: str = "experiment"
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    partition: PartitionConfig = field(default_factory=PartitionConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    attack: AttackConfig = field(default_factory=AttackConfig)
    defense: DefenseConfig = field(default_factory=DefenseConfig)
    seed: int = 0
    repeats: int = 1

    def to_dict(self) -> Dict[str, Any]:
        """Convert to a plain nested dictionary."""
        return asdict(self)

    @property
    def epochs(self) -> int:
        """Training epochs with the dataset default applied."""
        if self.training.epochs is not None:
            return self.training.epochs
        return DEFAULT_EPOCHS[self.dataset.name]

    @property
    def lr(self) -> float:
        """Learning rate with the dataset default applied."""
        if self.training.lr is not None:
            return self.training.lr
        return DEFAULT_LR[self.dataset.name]

    def resolved(self) -> "ExperimentConfig":
        """Copy with every dataset-dependent default filled in."""
        out = copy.deepcopy(self)
        out.training.epochs = self.epochs
        out.training.lr = self.lr
        return out

    def with_seed(self, seed: int) -> "ExperimentConfig":
        """Copy with another run seed."""
        out = copy.deepcopy(self)
        out.seed = seed
        return out

    def validate(self, check_files: bool = True) -> None:
        """Raise ConfigError on invalid values, naming the dotted path."""
        ds, part, train, atk = self.dataset, self.partition, self.training, self.attack
        if ds.name not in DATASETS:
            raise ConfigError(f"unknown dataset {ds.name!r}", "dataset.name")
        if ds.num_classes < 2:
            raise ConfigError("need at least two classes", "dataset.num_classes")
        if part.num_parties < 2:
            raise ConfigError("need at least two parties", "partition.num_parties")
        if part.kind not in PARTITION_KINDS:
            raise ConfigError(f"unknown partition kind {part.kind!r}", "partition.kind")
        if train.batch_size < 1:
            raise ConfigError("must be positive", "training.batch_size")
        if train.epochs is not None and train.epochs < 0:
            raise ConfigError("must be non-negative", "training.epochs")
        if any(w < 1 for w in self.model.hidden):
            raise ConfigError("hidden widths must be positive", "model.hidden")
        if atk.kind not in ATTACKS:
            raise ConfigError(f"unknown attack {atk.kind!r}", "attack.kind")
        if atk.optimizer not in INFERENCE_OPTIMIZERS:
            raise ConfigError(
                f"unknown optimizer {atk.optimizer!r}", "attack.optimizer"
            )
        if atk.gamma <= 0:
            raise ConfigError("must be positive", "attack.gamma")
        if atk.attacker is not None and not 0 <= atk.attacker < part.num_parties - 1:
            raise ConfigError("must name a passive party", "attack.attacker")
        if atk.distributed and atk.kind != "grad_replacement":
            raise ConfigError(
                "only the gradient-replacement backdoor is distributed",
                "attack.distributed",
            )
        if self.repeats < 1:
            raise ConfigError("must be positive", "repeats")
        self.defense.validate("defense")
        if check_files and ds.name == "mnist":
            data_dir = ds.data_dir or os.getenv("VFL_SHIELD_DATA_DIR", "data/mnist")
            for split in ("train", "test"):
                if find_mnist_files(data_dir, split) is None:
                    raise ConfigError(
                        f"MNIST {split} files not found in {data_dir}",
                        "dataset.data_dir",
                    )


def config_hash(config: ExperimentConfig) -> str:
    """Stable digest of the resolved config, independent of seed and repeats."""
    payload = config.resolved().to_dict()
    for key in HASH_EXCLUDED:
        payload.pop(key, None)
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def _check_value(value: Any, hint: Any, path: str) -> Any:
    origin = getattr(hint, "__origin__", None)
    args = getattr(hint, "__args__", ())
    if origin is Union:
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _check_value(value, inner[0], path)
    if origin in (list, List):
        if not isinstance(value, list):
            raise ConfigError(f"expected a list, got {value!r}", path)
        return [_check_value(v, args[0], f"{path}[{i}]") for i, v in enumerate(value)]
    if hint is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"expected true/false, got {value!r}", path)
        return value
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"expected an integer, got {value!r}", path)
        return value
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"expected a number, got {value!r}", path)
        return float(value)
    if hint is str:
        if not isinstance(value, str):
            raise ConfigError(f"expected a string, got {value!r}", path)
        return value
    return value


def _build(cls, data: Any, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"expected an object, got {data!r}", path or "<root>")
    hints = get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        where = f"{path}.{unknown[0]}" if path else unknown[0]
        raise ConfigError("unknown key", where)
    kwargs = {}
    for name, value in data.items():
        hint = hints[name]
        where = f"{path}.{name}" if path else name
        if dataclasses.is_dataclass(hint):
            kwargs[name] = _build(hint, value, where)
        else:
            kwargs[name] = _check_value(value, hint, where)
    return cls(**kwargs)


def config_from_dict(
    data: Dict[str, Any], check_files: bool = True
) -> ExperimentConfig:
    """Parse and validate a nested dictionary.

    Raises:
        ConfigError: On unknown keys, wrong types or invalid values.
    """
    config = _build(ExperimentConfig, data, "")
    config.validate(check_files=check_files)
    return config


def parse_override(item: str) -> tuple:
    """Split ``a.b=value``; the value parses as JSON, else stays a string."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form path=value")
    path, raw = item.split("=", 1)
    path = path.strip()
    if not path:
        raise ConfigError(f"override {item!r} has an empty path")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return path, value


def apply_overrides(data: Dict[str, Any], overrides: Sequence[str]) -> Dict[str, Any]:
    """Return a copy of ``data`` with dotted-path overrides applied."""
    out = copy.deepcopy(data)
    for item in overrides:
        path, value = parse_override(item)
        set_path(out, path, value)
    return out


def set_path(data: Dict[str, Any], path: str, value: Any) -> None:
    """Set a dotted path in a nested dictionary, creating objects as needed."""
    keys = path.split(".")
    node = data
    for i, key in enumerate(keys[:-1]):
        child = node.setdefault(key, {})
        if not isinstance(child, dict):
            raise ConfigError("is not an object", ".".join(keys[: i + 1]))
        node = child
    node[keys[-1]] = value


def load_config(
    path: Union[str, Path], overrides: Sequence[str] = (), check_files: bool = True
) -> ExperimentConfig:
    """Read a JSON config file and apply ``--set`` overrides.

    Raises:
        ConfigError: If the file is missing, not JSON or fails validation.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    return config_from_dict(apply_overrides(data, overrides), check_files=check_files)
