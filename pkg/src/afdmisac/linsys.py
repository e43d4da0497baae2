"""DD-domain linear system: 2D DFT, circular convolution, noisy transmission.

Forward transforms are unnormalised and the inverse carries ``1/(MN)``, so a
frame with per-entry power ``Es`` has per-bin power ``MN Es`` in the frequency
domain and white noise of variance ``sigma_w^2`` becomes ``MN sigma_w^2``.
"""

from __future__ import annotations

import numpy as np

from .kernel import DDKernel


def dft2(a: np.ndarray) -> np.ndarray:
    return np.fft.fft2(a, axes=(-2, -1))


def idft2(a: np.ndarray) -> np.ndarray:
    return np.fft.ifft2(a, axes=(-2, -1))


def dft2_naive(a: np.ndarray) -> np.ndarray:
    """O((MN)^2) direct sum, test oracle for :func:`dft2`."""
    a = np.asarray(a, dtype=complex)
    M, N = a.shape
    out = np.zeros_like(a)
    for m in range(M):
        for n in range(N):
            acc = 0j
            for ell in range(M):
                for k in range(N):
                    acc += a[ell, k] * np.exp(-2j * np.pi * (m * ell / M + n * k / N))
            out[m, n] = acc
    return out


def circ_conv2(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """2D circular convolution (indices modulo the grid), FFT accelerated.

    ``b`` may carry leading batch dimensions.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape[-2:] != b.shape[-2:]:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return idft2(dft2(a) * dft2(b))


def circ_conv2_naive(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    M, N = a.shape
    out = np.zeros((M, N), dtype=complex)
    for ell in range(M):
        for n in range(N):
            acc = 0j
            for i in range(M):
                for j in range(N):
                    acc += a[i, j] * b[(ell - i) % M, (n - j) % N]
            out[ell, n] = acc
    return out


def complex_noise(shape, sigma2: float, rng: np.random.Generator) -> np.ndarray:
    """Circularly symmetric complex Gaussian with variance ``sigma2``."""
    scale = np.sqrt(sigma2 / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def transmit(X: np.ndarray, H: DDKernel, G: DDKernel | None, sigma_w2: float,
             rng: np.random.Generator) -> np.ndarray:
    """``Y = H (*) G (*) X + W``; ``X`` may be a batch ``(..., M, N)``."""
    if sigma_w2 < 0:
        raise ValueError("sigma_w2 must be non-negative")
    Xf = dft2(X)
    Hf = dft2(H.values)
    if G is not None:
        if G.grid != H.grid:
            raise ValueError("precoder and channel grids differ")
        Hf = Hf * dft2(G.values)
    Y = idft2(Hf * Xf)
    if sigma_w2 > 0:
        Y = Y + complex_noise(Y.shape, sigma_w2, rng)
    return Y
