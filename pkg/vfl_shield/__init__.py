"""
VflShield - a deterministic simulator for attacks and defenses in vertical
federated learning.

This library trains feature-partitioned models over simulated encrypted
exchanges, runs label inference and gradient-replacement backdoor attacks
from passive parties, and evaluates label-disguise and noise defenses.
"""

__version__ = "0.1.0"

from vfl_shield.attacks import GradientReplacementBackdoor, infer_labels
from vfl_shield.defenses import CoAe, build_defense, train_coae
from vfl_shield.harness import ExperimentConfig, load_config, run_experiment, run_sweep
from vfl_shield.protocol import ActiveParty, PassiveParty, VflSession
from vfl_shield.storage import CSVStorage

__all__ = [
    "ActiveParty",
    "CSVStorage",
    "CoAe",
    "ExperimentConfig",
    "GradientReplacementBackdoor",
    "PassiveParty",
    "VflSession",
    "build_defense",
    "infer_labels",
    "load_config",
    "run_experiment",
    "run_sweep",
    "train_coae",
]
