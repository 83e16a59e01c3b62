import numpy as np
import pytest

from devrate import BandwidthSchedule, CumulantContext, build_model, make_builtin

# Frozen oracle values (closed forms evaluated at 30 digits with mpmath).
G0 = 0.398942280401432678  # standard normal density at 0
FOURTH_A = 0.67560359597982881702
FOURTH_B = 0.85120719195965763405


@pytest.fixture(scope="session")
def gauss_model():
    return build_model({"family": "gaussian_noise", "regression": "sin", "sigma": 1.0})


@pytest.fixture(scope="session")
def uniform():
    return make_builtin("uniform", 1)


@pytest.fixture(scope="session")
def fourth():
    return make_builtin("fourth_order_signed", 1)


@pytest.fixture(scope="session")
def nw_ctx(gauss_model, uniform):
    return CumulantContext(gauss_model, uniform, np.zeros(1))


@pytest.fixture(scope="session")
def sr_ctx(gauss_model, uniform):
    return CumulantContext(gauss_model, uniform, np.zeros(1), "semirec", 0.2)


@pytest.fixture(scope="session")
def sched():
    return BandwidthSchedule(1.0, 0.2)
