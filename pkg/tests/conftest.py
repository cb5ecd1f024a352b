import numpy as np
import pytest

from vtolnav.vehicle import BodyParams


@pytest.fixture(scope="session")
def params():
    return BodyParams()


@pytest.fixture()
def rng():
    return np.random.default_rng(20240811)
