import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from maskcfg.state import DenseDistribution, MixtureModel, StateSpace

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def two_point_mixture():
    """Class 1 uniform on {1,2}, class 2 uniform on {2,3}, N = 4, equal weights."""
    space = StateSpace(1, 4)
    return MixtureModel.from_data(space, [0.5, 0.5], [[0.5, 0.5, 0.0], [0.0, 0.5, 0.5]])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def overlap_1d():
    return two_point_mixture()


def dist_from_data(space, data):
    return DenseDistribution.from_data(space, np.asarray(data, float) / np.sum(data))
