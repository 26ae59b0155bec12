import numpy as np
import pytest
from hypothesis import settings

from netflat import _kernels, families

settings.register_profile("netflat", deadline=None, max_examples=40, derandomize=True)
settings.load_profile("netflat")

BACKENDS = ["numpy"] + (["numba"] if _kernels.HAS_NUMBA else [])


@pytest.fixture(params=BACKENDS)
def backend(request):
    prev = _kernels.set_backend(request.param)
    yield request.param
    _kernels.set_backend(prev)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def k2():
    return families.k2()


@pytest.fixture
def ray():
    return families.ray_unit()


@pytest.fixture
def path3():
    return families.path(3)


@pytest.fixture
def fixture10():
    return families.fixture10()
