import numpy as np
import pytest

from erzefoz.dataset import default_dataset


@pytest.fixture(scope="session")
def dataset():
    return default_dataset()


@pytest.fixture(scope="session")
def site1(dataset):
    return dataset.site(1)


@pytest.fixture(scope="session")
def site2(dataset):
    return dataset.site(2)


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)
