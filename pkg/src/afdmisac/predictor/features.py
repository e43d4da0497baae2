"""Feature encoding of tracked path tuples.

Per frame the ``K`` slots become a ``5K`` vector
``[a~_{1:K}, s_{1:K}, c_{1:K}, tau~_{1:K}, nu~_{1:K}]`` where ``a`` is the
floored log-amplitude, ``(s, c)`` the sine/cosine of the phase and ``~``
marks standardisation with statistics frozen from the training split.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Normalizer:
    mu_a: np.ndarray
    sd_a: np.ndarray
    mu_tau: np.ndarray
    sd_tau: np.ndarray
    mu_nu: np.ndarray
    sd_nu: np.ndarray
    A_min: float = 1e-4

    def __post_init__(self):
        for name in ("sd_a", "sd_tau", "sd_nu"):
            if not np.all(np.asarray(getattr(self, name)) > 0):
                raise ValueError(f"{name} must be strictly positive")
        if self.A_min <= 0:
            raise ValueError("A_min must be positive")
        for name in ("mu_a", "sd_a", "mu_tau", "sd_tau", "mu_nu", "sd_nu"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def K(self) -> int:
        return int(self.mu_a.shape[0])

    @classmethod
    def fit(cls, A, tau, nu, A_min: float = 1e-4, tau_unit: float = 1.0,
            nu_unit: float = 1.0, rel_floor: float = 1e-2) -> "Normalizer":
        """Per-slot statistics over ``(T, K)`` training arrays.

        Standard deviations are floored at ``rel_floor`` times a natural unit
        (1 for log-amplitude, the grid resolution for delay/Doppler) so a
        static slot does not blow up the de-standardisation.
        """
        a = np.log(np.maximum(np.asarray(A, float), A_min))
        tau = np.asarray(tau, float)
        nu = np.asarray(nu, float)
        return cls(
            mu_a=a.mean(0), sd_a=np.maximum(a.std(0), rel_floor),
            mu_tau=tau.mean(0), sd_tau=np.maximum(tau.std(0), rel_floor * tau_unit),
            mu_nu=nu.mean(0), sd_nu=np.maximum(nu.std(0), rel_floor * nu_unit),
            A_min=A_min,
        )

    def to_dict(self) -> dict:
        return {k: np.asarray(getattr(self, k)).tolist()
                for k in ("mu_a", "sd_a", "mu_tau", "sd_tau", "mu_nu", "sd_nu")} | {"A_min": self.A_min}

    @classmethod
    def from_dict(cls, d: dict) -> "Normalizer":
        return cls(**{k: (np.asarray(v) if k != "A_min" else float(v)) for k, v in d.items()})


def encode(A, theta, tau, nu, norm: Normalizer) -> np.ndarray:
    """Encode ``(..., K)`` arrays into ``(..., 5K)`` feature vectors."""
    a = np.log(np.maximum(np.asarray(A, float), norm.A_min))
    theta = np.asarray(theta, float)
    return np.concatenate([
        (a - norm.mu_a) / norm.sd_a,
        np.sin(theta),
        np.cos(theta),
        (np.asarray(tau, float) - norm.mu_tau) / norm.sd_tau,
        (np.asarray(nu, float) - norm.mu_nu) / norm.sd_nu,
    ], axis=-1)


def split_features(x: np.ndarray, K: int):
    """Views ``(a~, s, c, tau~, nu~)`` of a ``(..., 5K)`` array."""
    if x.shape[-1] != 5 * K:
        raise ValueError(f"expected last dimension {5 * K}, got {x.shape[-1]}")
    return tuple(x[..., i * K:(i + 1) * K] for i in range(5))


@dataclass(frozen=True)
class DecodedPaths:
    A: np.ndarray
    theta: np.ndarray
    tau: np.ndarray
    nu: np.ndarray

    @property
    def h(self) -> np.ndarray:
        return self.A * np.exp(1j * self.theta)

    def tuples(self) -> list[tuple[complex, float, float]]:
        """Flat ``(h, tau, nu)`` list for kernel synthesis (1-D inputs only)."""
        return list(zip(self.h.ravel(), self.tau.ravel(), self.nu.ravel()))


def decode(pred: np.ndarray, norm: Normalizer) -> DecodedPaths:
    """Invert :func:`encode`; the phase magnitude ``|(s, c)|`` is ignored."""
    at, s, c, tt, vt = split_features(np.asarray(pred, float), norm.K)
    degenerate = (s == 0) & (c == 0)
    if np.any(degenerate):
        log.warning("degenerate phase prediction (s, c) = (0, 0); using theta = 0")
    theta = np.where(degenerate, 0.0, np.arctan2(s, c))
    return DecodedPaths(
        A=np.exp(at * norm.sd_a + norm.mu_a),
        theta=theta,
        tau=tt * norm.sd_tau + norm.mu_tau,
        nu=vt * norm.sd_nu + norm.mu_nu,
    )
