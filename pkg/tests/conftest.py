import numpy as np
import pytest

from helpers import small_scenario, training_settings
from modules.synth import generate_dataset


@pytest.fixture(scope='session')
def small_world():
    """(Dataset, GroundTruth) of the six-hour scenario."""
    return generate_dataset(small_scenario(seed=3))


@pytest.fixture(scope='session')
def light_training(small_world):
    """(ModelBundle, report rows) of the DTW verifier for 'light_on'."""
    from main import train_event
    dataset, _ = small_world
    return train_event(dataset, 'light_on', training_settings())


@pytest.fixture
def blobs():
    """Two Gaussian blobs in 2-D, 8 sigma apart, with interleaved labels."""
    rng = np.random.default_rng(42)
    n = 40
    X = np.empty((2 * n, 2))
    X[0::2] = rng.normal(-4.0, 1.0, size=(n, 2))
    X[1::2] = rng.normal(4.0, 1.0, size=(n, 2))
    y = np.tile([0, 1], n)
    return X, y
