"""Modulation, receiver model and evaluation metrics.

Receiver model
--------------
The frame ``Y = H_eff (*) X + W`` is observed with noise variance
``MN * sigma_w^2`` per entry, so a unit mean-square ``H_eff`` carries
``MN * Es`` signal power per entry and the effective SNR equals
``Es / sigma_w^2``.  The receiver applies one scalar MMSE weight to the
direct tap::

    beta = conj(H_eff[0, 0]) Es / (sum |H_eff|^2 Es + sigma_n^2)

``beta * Y`` is the soft estimate used for the symbol MSE; hard decisions
use the unbiased version ``Y / H_eff[0, 0]``.  Energy outside the direct tap
acts as interference, so MSE and SER measure how close ``H_eff`` is to a
scaled delta.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfc

from .kernel import DDGrid, DDKernel


# ----------------------------------------------------------------------------
# constellations
# ----------------------------------------------------------------------------

_GRAY_PAM4 = np.array([-3.0, -1.0, 3.0, 1.0])   # bit pairs 00, 01, 10, 11


@dataclass(frozen=True)
class Constellation:
    """Gray-mapped QPSK or 16-QAM with mean energy ``Es``.

    QPSK: bits ``(b0, b1)`` map to ``((1 - 2 b0) + j (1 - 2 b1)) sqrt(Es / 2)``,
    so ``00`` is ``(1 + j) sqrt(Es / 2)``.  16-QAM: ``(b0, b1)`` pick the
    in-phase level and ``(b2, b3)`` the quadrature level from the Gray PAM-4
    sequence ``00 -> -3, 01 -> -1, 11 -> +1, 10 -> +3``.
    """

    order: int = 4
    Es: float = 1.0
    points: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.order == 4:
            b = np.arange(4)
            pts = ((1 - 2 * (b >> 1)) + 1j * (1 - 2 * (b & 1))) / math.sqrt(2)
        elif self.order == 16:
            b = np.arange(16)
            pts = (_GRAY_PAM4[b >> 2] + 1j * _GRAY_PAM4[b & 3]) / math.sqrt(10)
        else:
            raise ValueError(f"unsupported constellation order {self.order}; use 4 or 16")
        if not self.Es > 0:
            raise ValueError("Es must be positive")
        pts = pts * math.sqrt(self.Es)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def bits_per_symbol(self) -> int:
        return int(math.log2(self.order))


def modulate(bits, c: Constellation, grid: DDGrid) -> np.ndarray:
    """Bits (MSB first per symbol) to ``(..., M, N)`` frames."""
    bits = np.asarray(bits, dtype=np.int64).ravel()
    per_frame = c.bits_per_symbol * grid.M * grid.N
    if bits.size == 0 or bits.size % per_frame:
        raise ValueError(f"bit count {bits.size} is not a positive multiple of {per_frame}")
    if np.any((bits != 0) & (bits != 1)):
        raise ValueError("bits must be 0 or 1")
    groups = bits.reshape(-1, c.bits_per_symbol)
    idx = groups @ (1 << np.arange(c.bits_per_symbol - 1, -1, -1))
    frames = c.points[idx].reshape(-1, grid.M, grid.N)
    return frames[0] if frames.shape[0] == 1 else frames


def demodulate(Y: np.ndarray, c: Constellation) -> np.ndarray:
    """Nearest-point symbol indices."""
    Y = np.asarray(Y)
    return np.argmin(np.abs(Y[..., None] - c.points), axis=-1)


def random_symbols(rng: np.random.Generator, c: Constellation, shape) -> tuple[np.ndarray, np.ndarray]:
    idx = rng.integers(0, c.order, size=shape)
    return c.points[idx], idx


# ----------------------------------------------------------------------------
# receiver and per-frame errors
# ----------------------------------------------------------------------------

def mmse_scalar(H_eff: DDKernel, Es: float, noise_var: float) -> complex:
    h0 = H_eff.values[0, 0]
    return complex(np.conj(h0) * Es / (np.sum(np.abs(H_eff.values) ** 2) * Es + noise_var))


def receive(Y: np.ndarray, H_eff: DDKernel, Es: float, noise_var: float):
    """``(soft, unbiased)`` estimates of the transmitted symbols."""
    beta = mmse_scalar(H_eff, Es, noise_var)
    h0 = H_eff.values[0, 0]
    soft = beta * Y
    unbiased = Y / h0 if h0 != 0 else np.zeros_like(Y)
    return soft, unbiased


def frame_mse(X_soft: np.ndarray, X: np.ndarray) -> float:
    X_soft, X = np.asarray(X_soft), np.asarray(X)
    if X_soft.shape != X.shape:
        raise ValueError(f"shape mismatch {X_soft.shape} vs {X.shape}")
    return float(np.mean(np.abs(X_soft - X) ** 2))


def frame_ser(idx_hat: np.ndarray, idx: np.ndarray) -> float:
    idx_hat, idx = np.asarray(idx_hat), np.asarray(idx)
    if idx_hat.shape != idx.shape:
        raise ValueError(f"shape mismatch {idx_hat.shape} vs {idx.shape}")
    return float(np.mean(idx_hat != idx))


def qfunc(x):
    return 0.5 * erfc(np.asarray(x, float) / math.sqrt(2))


def qpsk_ser_theory(snr_lin: float) -> float:
    """Exact Gray-QPSK SER on AWGN at ``Es / N0 = snr_lin``."""
    q = float(qfunc(math.sqrt(snr_lin)))
    return 2 * q - q * q


# ----------------------------------------------------------------------------
# prediction metrics
# ----------------------------------------------------------------------------

def cnmse(H_true: DDKernel, H_hat: DDKernel) -> float:
    """``100 * sum |H - H_hat|^2 / sum |H|^2`` in percent."""
    if H_true.grid != H_hat.grid:
        raise ValueError("kernels live on different grids")
    den = float(np.sum(np.abs(H_true.values) ** 2))
    if den == 0:
        raise ValueError("true kernel has zero energy")
    return 100.0 * float(np.sum(np.abs(H_true.values - H_hat.values) ** 2)) / den


@dataclass(frozen=True)
class Summary:
    mean: float
    p50: float
    p90: float


def summarize(values) -> Summary:
    v = np.asarray(values, float)
    if v.size == 0:
        raise ValueError("nothing to summarize")
    return Summary(float(v.mean()), float(np.percentile(v, 50)), float(np.percentile(v, 90)))


def smape_amp(A_true, A_pred) -> float:
    """Mean of ``200 |A_hat - A| / (A_hat + A)`` over slots not both zero."""
    a, b = np.asarray(A_true, float).ravel(), np.asarray(A_pred, float).ravel()
    if a.shape != b.shape:
        raise ValueError("amplitude arrays differ in shape")
    s = a + b
    keep = s > 0
    if not np.any(keep):
        raise ValueError("no matched slots")
    return float(np.mean(200.0 * np.abs(b[keep] - a[keep]) / s[keep]))


def mae_phase(theta_true, theta_pred, weights=None, weighted: bool = True) -> float:
    """Mean wrapped absolute phase error in degrees, in ``[0, 180]``.

    Amplitude-weighted by ``weights`` when ``weighted`` is set; slots with zero
    weight are then ignored.
    """
    t, p = np.asarray(theta_true, float).ravel(), np.asarray(theta_pred, float).ravel()
    if t.shape != p.shape or t.size == 0:
        raise ValueError("no matched slots")
    d = np.abs((p - t + np.pi) % (2 * np.pi) - np.pi)
    deg = np.degrees(d)
    if weighted and weights is not None:
        w = np.asarray(weights, float).ravel()
        if w.sum() <= 0:
            raise ValueError("no matched slots with positive weight")
        return float(np.sum(w * deg) / w.sum())
    return float(deg.mean())


def crlb_ratio(J_lambda: float, J_zero: float) -> float:
    if not J_zero > 0:
        raise ValueError(f"reference CRLB trace must be positive, got {J_zero}")
    return float(J_lambda / J_zero)
