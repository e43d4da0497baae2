"""Frequency-domain MMSE and sensing-regularized pre-equalizers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fisher import SensitivityMap
from .kernel import DDKernel, PowerConfig
from .linsys import circ_conv2, dft2, idft2


@dataclass(frozen=True)
class PreeqConfig:
    lambda_isac: float = 0.0
    gamma: float = 0.1
    denom_floor: float | None = None     # None -> gamma
    normalize_heff: bool = True

    def __post_init__(self):
        if not self.lambda_isac >= 0:
            raise ValueError(f"lambda_isac must be >= 0, got {self.lambda_isac}")
        if not self.gamma > 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")
        if self.denom_floor is not None and not self.denom_floor > 0:
            raise ValueError(f"denom_floor must be > 0, got {self.denom_floor}")

    @property
    def floor(self) -> float:
        return self.gamma if self.denom_floor is None else self.denom_floor

    @classmethod
    def for_power(cls, pc: PowerConfig, lambda_isac: float = 0.0, **kw) -> "PreeqConfig":
        return cls(lambda_isac=lambda_isac, gamma=pc.gamma, **kw)


def mmse_filter(H_f: np.ndarray, gamma: float) -> np.ndarray:
    """Unscaled Wiener filter ``H* / (|H|^2 + gamma)``."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    H_f = np.asarray(H_f, dtype=complex)
    return np.conj(H_f) / (np.abs(H_f) ** 2 + gamma)


def isac_filter(H_f: np.ndarray, S: SensitivityMap | np.ndarray, cfg: PreeqConfig) -> np.ndarray:
    """``H* / max(|H|^2 (1 - lambda S) + gamma, floor)``.

    ``lambda = 0`` returns :func:`mmse_filter` directly, so the reduction is
    bit-exact even for a custom floor above ``gamma``.
    """
    if cfg.lambda_isac == 0:
        return mmse_filter(H_f, cfg.gamma)
    H_f = np.asarray(H_f, dtype=complex)
    s = S.values if isinstance(S, SensitivityMap) else np.asarray(S, float)
    denom = np.abs(H_f) ** 2 * (1.0 - cfg.lambda_isac * s) + cfg.gamma
    return np.conj(H_f) / np.maximum(denom, cfg.floor)


def normalize_precoder(G: DDKernel, Es: float) -> DDKernel:
    """Scale by the positive real ``alpha`` so the mean-square entry equals ``Es``."""
    p = G.power()
    if p == 0:
        raise ValueError("cannot normalize an all-zero precoder")
    return G.scaled(np.sqrt(Es / p))


def normalize_effective(H_eff: DDKernel) -> tuple[DDKernel, float]:
    """Unit mean-square effective kernel and the applied amplitude scale."""
    p = H_eff.power()
    if p == 0:
        raise ValueError("cannot normalize an all-zero effective kernel")
    s = 1.0 / np.sqrt(p)
    return H_eff.scaled(s), float(s)


def build_preequalizer(H_csi: DDKernel, S: SensitivityMap | np.ndarray | None, cfg: PreeqConfig,
                       pc: PowerConfig) -> DDKernel:
    """Precoder kernel ``G`` from CSI: filter, back to DD domain, power-normalize."""
    H_f = dft2(H_csi.values)
    if S is None or cfg.lambda_isac == 0:
        G_f = mmse_filter(H_f, cfg.gamma)
    else:
        G_f = isac_filter(H_f, S, cfg)
    return normalize_precoder(DDKernel(H_csi.grid, idft2(G_f)), pc.symbol_energy)


def effective_kernel(H_true: DDKernel, G: DDKernel, cfg: PreeqConfig) -> tuple[DDKernel, float]:
    """``H_true * G`` (circular), unit-normalized unless the noNorm switch is set."""
    H = DDKernel(H_true.grid, circ_conv2(H_true.values, G.values))
    if not cfg.normalize_heff:
        return H, 1.0
    return normalize_effective(H)
