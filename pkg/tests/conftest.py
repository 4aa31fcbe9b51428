import numpy as np
import pytest

from ospca.config import load_config
from ospca.experiments import Study


@pytest.fixture(scope="session")
def default_config():
    return load_config()


@pytest.fixture(scope="session")
def study(default_config):
    """Default pipeline, shared by every test that needs the full data set."""
    return Study(default_config)


@pytest.fixture(scope="session")
def train(study):
    return study.train


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def dense_second_moment(X):
    """Oracle: K = X X^T / M formed explicitly and diagonalised with eigh."""
    K = X @ X.T / X.shape[1]
    lam, vec = np.linalg.eigh(K)
    return K, lam[::-1], vec[:, ::-1]
