import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from anosovlab.groups import load_group

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def schottky10():
    return load_group("schottky-10")[0]


@pytest.fixture(scope="session")
def schottky3():
    return load_group("schottky-3")[0]
