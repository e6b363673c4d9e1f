import numpy as np
import pytest

from shapemetric.primitives import box, icosphere


@pytest.fixture(scope="session")
def sphere4():
    return icosphere(4, 0.5)


@pytest.fixture(scope="session")
def sphere3():
    return icosphere(3, 0.5)


@pytest.fixture
def unit_box():
    return box((1.0, 1.0, 1.0))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
