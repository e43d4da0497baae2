import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from afdmisac.kernel import DDGrid, DDKernel
from afdmisac.linsys import (circ_conv2, circ_conv2_naive, complex_noise, dft2, dft2_naive, idft2,
                             transmit)

from conftest import crandn, rel_err


def _delta(shape, scale=1.0):
    d = np.zeros(shape, complex)
    d[0, 0] = scale
    return d


def test_dft_examples():
    np.testing.assert_allclose(dft2(_delta((8, 8))), np.ones((8, 8)))
    np.testing.assert_allclose(dft2(np.ones((8, 8))), _delta((8, 8), 64), atol=1e-12)


@pytest.mark.parametrize("shape", [(8, 8), (16, 16), (4, 6)])
def test_dft_naive_and_inverse(shape, rng):
    A = crandn(rng, *shape)
    assert rel_err(dft2(A), dft2_naive(A)) <= 1e-10
    assert rel_err(idft2(dft2(A)), A) <= 1e-12


def test_circ_conv_examples(rng):
    A, B = crandn(rng, 8, 8), crandn(rng, 8, 8)
    np.testing.assert_allclose(circ_conv2(A, _delta((8, 8))), A, atol=1e-13)
    np.testing.assert_allclose(circ_conv2(A, B), circ_conv2(B, A), atol=1e-12)
    assert rel_err(circ_conv2(A, B), circ_conv2_naive(A, B)) <= 1e-10
    with pytest.raises(ValueError, match="shape mismatch"):
        circ_conv2(A, np.zeros((8, 4)))


cplx = arrays(complex, (8, 8), elements=st.complex_numbers(max_magnitude=10, allow_nan=False,
                                                           allow_infinity=False))


@given(cplx, cplx)
def test_convolution_theorem(A, B):
    lhs = dft2(circ_conv2_naive(A, B))
    rhs = dft2(A) * dft2(B)
    scale = max(np.linalg.norm(A) * np.linalg.norm(B), 1e-300)
    assert np.linalg.norm(lhs - rhs) <= 1e-10 * scale * 8


@given(cplx)
def test_parseval(A):
    e = np.sum(np.abs(A) ** 2)
    assert np.sum(np.abs(dft2(A)) ** 2) / 64 == pytest.approx(e, rel=1e-10, abs=1e-200)


def test_transmit_noiseless(rng):
    g = DDGrid(8, 8, 1, 1)
    X = crandn(rng, 8, 8)
    H = DDKernel(g, _delta((8, 8)))
    np.testing.assert_allclose(transmit(X, H, None, 0.0, rng), X, atol=1e-13)
    np.testing.assert_allclose(transmit(X, H, DDKernel(g, _delta((8, 8), 2.0)), 0.0, rng), 2 * X, atol=1e-13)
    with pytest.raises(ValueError):
        transmit(X, H, None, -1.0, rng)


def test_transmit_deterministic(rng):
    g = DDGrid(8, 8, 1, 1)
    H = DDKernel(g, crandn(rng, 8, 8))
    X = crandn(rng, 8, 8)
    a = transmit(X, H, None, 0.5, np.random.default_rng(9))
    b = transmit(X, H, None, 0.5, np.random.default_rng(9))
    np.testing.assert_array_equal(a, b)


def test_noise_variance_and_whiteness():
    g = DDGrid(8, 8, 1, 1)
    H = DDKernel(g, _delta((8, 8)))
    Y = transmit(np.zeros((10_000, 8, 8)), H, None, 1.0, np.random.default_rng(5))
    var = np.mean(np.abs(Y) ** 2, axis=0)
    assert np.all(np.abs(var - 1.0) < 0.03 * 1.0 + 0.03)
    assert abs(np.mean(np.abs(Y) ** 2) - 1.0) < 0.03
    flat = Y.reshape(10_000, -1)
    C = (flat.conj().T @ flat) / 10_000
    off = C[~np.eye(64, dtype=bool)]
    assert np.max(np.abs(off)) < 0.05


def test_complex_noise_components(rng):
    w = complex_noise(200_000, 2.0, rng)
    assert np.var(w.real) == pytest.approx(1.0, rel=0.02)
    assert np.var(w.imag) == pytest.approx(1.0, rel=0.02)
