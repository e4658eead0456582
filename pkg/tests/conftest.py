import numpy as np
import pytest

from scmpc import kernels
from scmpc.model import StageCost, example_sets, example_system

BACKENDS = sorted(kernels.backends())


@pytest.fixture(params=BACKENDS)
def backend(request):
    return kernels.backends()[request.param]


@pytest.fixture
def system():
    return example_system()


@pytest.fixture
def sets():
    return example_sets()


@pytest.fixture
def unit_cost():
    return StageCost(np.eye(2), np.eye(2))
