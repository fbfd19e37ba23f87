import numpy as np
import pytest

from pnlsvi.scenarios import default_scenario, two_state_instance


@pytest.fixture
def two_state():
    return two_state_instance()


@pytest.fixture
def default_mdp():
    return default_scenario(0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
