import numpy as np
import pytest

from pemadm import BiasSignal, CarFollowingParams, Controller, build_car_following

# Gains reported for the two-mode car-following configuration (mode 0 is the
# misdetection mode): the stabilizing pair and the guaranteed-cost pair.
K_SSC_REF = (np.array([[0.0, -101.0]]), np.array([[-0.45, -100.0]]))
K_SOGCC_REF = (np.array([[0.0, -3.6]]), np.array([[-1.22, -2.66]]))

QW = np.diag([10.0, 10.0])
RW = np.array([[1.0]])
LAM = 1e-5
HORIZON = 3000
R0 = 1


@pytest.fixture(scope="session")
def cf_params():
    return CarFollowingParams()


@pytest.fixture(scope="session")
def cf_model(cf_params):
    model, x0 = build_car_following(cf_params)
    return model, x0


@pytest.fixture(scope="session")
def ssc_ref():
    return Controller(gains=K_SSC_REF)


@pytest.fixture(scope="session")
def sogcc_ref():
    return Controller(gains=K_SOGCC_REF)


@pytest.fixture(scope="session")
def cf_bias():
    return BiasSignal.constant([-1.0, -1.0])
