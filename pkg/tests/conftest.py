"""Shared fixtures: small blob datasets and ready-made sessions."""

import numpy as np
import pytest

from vfl_shield.data import PartitionSpec, synth_blobs, vertical_split
from vfl_shield.defenses import NoDefense
from vfl_shield.numerics import Mlp
from vfl_shield.protocol import ActiveParty, PassiveParty, VflSession


def make_models(widths, num_classes, hidden=(8,), seed=0):
    """Bottom models in party order from one seeded generator."""
    rng = np.random.default_rng(seed)
    return [Mlp.create([w, *hidden, num_classes], rng) for w in widths]


def make_session(
    dataset, num_parties=2, defense=None, attacks=None, models=None, **kwargs
):
    """Session over an even vertical split of ``dataset``."""
    spec = PartitionSpec.even(dataset.num_features, num_parties)
    views = vertical_split(dataset, spec)
    models = models or make_models(spec.widths, dataset.num_classes)
    attacks = attacks or {}
    passive = [
        PassiveParty(i, models[i], views[i], attack=attacks.get(i))
        for i in range(num_parties - 1)
    ]
    k = num_parties - 1
    active = ActiveParty(k, models[k], views[k], dataset.labels, defense or NoDefense())
    return VflSession(passive, active, **kwargs)


@pytest.fixture
def blobs():
    """Three well-separated classes, six features, 60 samples."""
    return synth_blobs(3, 6, 20, 0.05, seed=0)


@pytest.fixture
def session(blobs):
    """Undefended two-party session over ``blobs``."""
    return make_session(blobs, batch_size=8, lr=0.1, seed=3)
