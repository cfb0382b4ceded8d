import numpy as np
import pytest

from priorbnn.network import NetworkArchitecture


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_arch():
    return NetworkArchitecture(n_features=3, hidden=(4, 3), n_classes=3)
