import numpy as np
import pytest
from hypothesis import settings

from afdmisac.kernel import DDGrid

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture
def grid16():
    return DDGrid(16, 16, 1e-8, 1e3)


@pytest.fixture
def grid8():
    return DDGrid(8, 8, 1e-8, 1e3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def rel_err(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def standard_scene(snr_db=10.0):
    """16 x 16 two-path scene used for sensitivity-map validation.

    Returns ``(eta, G_mmse, X_f, sigma2_f, grid)`` with the noise variance
    expressed per frequency bin (``MN sigma_w^2``).
    """
    from afdmisac.fisher import EtaVector, _freq_response
    from afdmisac.kernel import PowerConfig
    from afdmisac.preeq import mmse_filter

    g = DDGrid(16, 16, 1e-8, 1e3)
    eta = EtaVector.from_paths([(1.0 + 0j, 3.3e-8, 1.4e3), (0.5 * np.exp(1j), 7.6e-8, -2.7e3)], g)
    H_f = _freq_response(eta.values, eta, g)
    pc = PowerConfig.from_snr_db(snr_db)
    return eta, mmse_filter(H_f, pc.gamma), np.ones(g.shape), g.M * g.N * pc.noise_var, g
