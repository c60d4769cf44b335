import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from palm.datastreams import gen_mackey_glass, load_real_world
from palm.inference import StreamSample

settings.register_profile("palm", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("palm")


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


@pytest.fixture(scope="session")
def bj_standin():
    return load_real_world("box-jenkins", standin=True)


@pytest.fixture(scope="session")
def mg_small():
    """A short Mackey-Glass problem for fast end-to-end checks."""
    return gen_mackey_glass(train=(201, 700), test=(5001, 5100))


def linear_stream(w, n, rng, noise=0.0, start=1):
    """Samples from ``y = x_e . w`` with inputs uniform in [-1, 1]."""
    w = np.asarray(w, dtype=float)
    out = []
    for k in range(n):
        x = rng.uniform(-1.0, 1.0, w.size - 1)
        x_e = np.concatenate(([1.0], x))
        out.append(StreamSample(x_e, float(x_e @ w + noise * rng.normal()), start + k))
    return out
