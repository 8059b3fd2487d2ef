"""Test configuration and fixtures for fluxamba tests."""

import numpy as np
import pytest

from fluxamba import checkpoint
from fluxamba.data.dataset import write_dataset
from fluxamba.data.synthetic import generate
from fluxamba.models import GenSpec, TrainParams, variant_config
from fluxamba.network import build
from fluxamba.training import train_loop


@pytest.fixture
def rng():
    """Seeded generator for test inputs.

    Returns:
        A numpy Generator seeded with 0.
    """
    return np.random.default_rng(0)


@pytest.fixture
def micro_config():
    return variant_config("micro")


@pytest.fixture
def micro_model(micro_config):
    """Fluxamba-Micro built in double precision.

    Args:
        micro_config: The micro variant config fixture.

    Returns:
        A freshly initialized model.
    """
    return build(micro_config, "f64")


@pytest.fixture
def dataset_dir(tmp_path):
    """Ten 32×32 synthetic samples written under a temporary directory.

    The ids split 8/1/1 into train, val and test.

    Args:
        tmp_path: pytest's per-test temporary directory.

    Returns:
        Path of the dataset root.
    """
    root = tmp_path / "data"
    write_dataset(generate(GenSpec(count=10, size=32, seed=7)), root)
    return root


@pytest.fixture
def checkpoint_path(tmp_path, micro_config):
    """An untrained Fluxamba-Micro checkpoint.

    Args:
        tmp_path: pytest's per-test temporary directory.
        micro_config: The micro variant config fixture.

    Returns:
        Path of the checkpoint file.
    """
    path = tmp_path / "micro.flxa"
    checkpoint.save(build(micro_config), path)
    return path


@pytest.fixture(scope="session")
def overfit_run():
    """Fluxamba-Micro trained for 300 steps on eight 64×64 synthetic samples.

    Shared by the slow tests that need a model fitted to its training data.

    Returns:
        The trained model, its training samples and the TrainResult.
    """
    samples = generate(GenSpec(count=8, size=64, seed=5))
    model = build(variant_config("micro"))
    result = train_loop(model, samples, hp=TrainParams(epochs=75, lr=1e-3, max_steps=300, augment=False))
    return model, samples, result
