"""Shared fixtures: a small dataset and models sized for fast tests."""

import numpy as np
import pytest

from gradseg import datagen, manifold
from gradseg.orchestrator import LoopConfig

TINY = dict(height=16, width=16)


@pytest.fixture(scope="session")
def tiny_spec():
    return datagen.DatasetSpec(n_train=60, n_test=12, seed=0, **TINY)


@pytest.fixture(scope="session")
def tiny_dataset(tiny_spec):
    return datagen.generate_dataset(tiny_spec)


@pytest.fixture(scope="session")
def tiny_vae(tiny_dataset):
    vae = manifold.Vae(z_dim=2, filters=(4, 8), seed=0, **TINY)
    manifold.train_vae(
        tiny_dataset.split("train"), vae, manifold.VaeTrainConfig(epochs=20, seed=0)
    )
    return vae


def tiny_config(**overrides):
    base = dict(
        m=4,
        n_iterations=1,
        epochs_per_iter=2,
        batch_size=8,
        z_dim=2,
        seg_filters=(4, 8),
        seg_bottleneck=16,
        seed=0,
    )
    base.update(overrides)
    return LoopConfig(**base)


def rand64(rng, shape):
    return rng.normal(shape, dtype=np.float64)
