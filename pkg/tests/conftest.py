import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="module", params=["python", "cython"])
def kernel_module(request):
    if request.param == "python":
        from contraproj import _pykernels as mod
    else:
        mod = pytest.importorskip("contraproj._ckernels")
    return mod
