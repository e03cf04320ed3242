import numpy as np
import pytest

from bandkit.models import free_laplacian, mathieu


@pytest.fixture(scope="session")
def free1():
    return free_laplacian(1)


@pytest.fixture(scope="session")
def free2():
    return free_laplacian(2)


@pytest.fixture(scope="session")
def mathieu1():
    return mathieu(1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
