import numpy as np
import pytest

from emrelax.model import ModelParams, PressureLaw


@pytest.fixture
def default_params():
    # rho_bar = 1, A = 1/2, gamma = 2 gives P'(1) = 1, K = 1 and Phi == 0
    return ModelParams()


@pytest.fixture
def isothermal_params():
    return ModelParams(law=PressureLaw(amplitude=1.0, gamma=1.0))


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
