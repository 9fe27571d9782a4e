import numpy as np
import pytest

from greybox.rng import SplitMix64, derive_seed
from greybox.systems import get_system


@pytest.fixture
def rng():
    return SplitMix64(12345)


@pytest.fixture(scope="session")
def mm_system():
    return get_system("mm")


@pytest.fixture(scope="session")
def bio_system():
    return get_system("bioreactor")


@pytest.fixture(scope="session")
def mm_series_full(mm_system):
    """Ground-truth stirred-tank series (hidden enzyme included)."""
    return mm_system.simulate(derive_seed(424242, "data"))


@pytest.fixture(scope="session")
def mm_dataset(mm_system, mm_series_full):
    from greybox.train import Dataset
    return Dataset.build(mm_series_full, mm_system.embedding)


@pytest.fixture(scope="session")
def bio_series_full(bio_system):
    return bio_system.simulate(derive_seed(424242, "data"), duration=800.0)


@pytest.fixture(scope="session")
def bio_dataset(bio_system, bio_series_full):
    from greybox.train import Dataset
    return Dataset.build(bio_series_full, bio_system.embedding)


def identity_normalizer(names):
    from greybox.train import Normalizer
    n = len(names)
    return Normalizer(tuple(names), np.zeros(n), np.ones(n))
