import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from stablerank.models import LinearModel, MLPModel, TabularDataset


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def background6():
    gen = np.random.default_rng(11)
    return TabularDataset(gen.normal(size=(40, 6)))


@pytest.fixture
def linear6():
    return LinearModel(np.array([3.0, -2.5, 2.0, -1.4, 0.8, -0.3]), bias=0.5)


@pytest.fixture
def handle6(linear6):
    return linear6.as_handle()


@pytest.fixture
def background2():
    return TabularDataset(np.array([[1.0, 2.0], [-1.0, 0.0], [3.0, -2.0], [0.5, 1.5]]))


@pytest.fixture
def interaction4():
    """f(x) = 2 x0 + x1 x2 - 0.5 x3 + x0 x3: interactions break additivity."""

    def fn(batch):
        return (2.0 * batch[:, 0] + batch[:, 1] * batch[:, 2]
                - 0.5 * batch[:, 3] + batch[:, 0] * batch[:, 3])

    from stablerank.models import ModelHandle

    return ModelHandle(fn, n_features=4)


@pytest.fixture
def background4():
    gen = np.random.default_rng(7)
    return TabularDataset(gen.normal(size=(25, 4)))


@pytest.fixture
def mlp2():
    w1 = np.array([[1.0, -2.0], [0.5, 1.5]])
    b1 = np.array([0.25, -0.5])
    w2 = np.array([[2.0], [-1.0]])
    b2 = np.array([0.1])
    return MLPModel([(w1, b1), (w2, b2)])
