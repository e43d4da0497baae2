"""Kernel prediction from a history window."""

from __future__ import annotations

import numpy as np

from ..kernel import DDGrid, DDKernel, _synth_bins
from .features import DecodedPaths, Normalizer, decode
from .gru import GruModel, gru_forward


def kernel_from_paths(p: DecodedPaths, grid: DDGrid) -> DDKernel:
    """Synthesize a kernel from 1-D decoded path arrays."""
    vals = _synth_bins(np.asarray(p.h).ravel(), np.asarray(p.tau).ravel() / grid.delta_tau,
                       np.asarray(p.nu).ravel() / grid.delta_nu, grid)
    return DDKernel(grid, vals)


def predict_paths(model: GruModel, window: np.ndarray, norm: Normalizer) -> DecodedPaths:
    """One-step-ahead decoded paths for an ``(L, 5K)`` feature window."""
    return decode(gru_forward(model, window)[0], norm)


def predict_kernel(model: GruModel, window: np.ndarray, norm: Normalizer, grid: DDGrid) -> DDKernel:
    return kernel_from_paths(predict_paths(model, window, norm), grid)
