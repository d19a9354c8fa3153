import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_tucker(rng, dims, ranks):
    core = rng.standard_normal(ranks)
    out = core
    for mode, (n, r) in enumerate(zip(dims, ranks)):
        u = np.linalg.qr(rng.standard_normal((n, r)))[0]
        out = np.moveaxis(np.tensordot(u, out, axes=(1, mode)), 0, mode)
    return out
