"""Slepian-Bangs Fisher information, CRLB trace and the per-bin sensitivity map.

The parameter vector stacks ``(Re h, Im h, tau, nu)`` per dominant path with
delay and Doppler expressed in grid bins (``tau / delta_tau``, ``nu / delta_nu``).
Bin units keep the FIM well conditioned; converting the CRLB to seconds and
hertz is a fixed diagonal rescaling.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .kernel import DDGrid, DDKernel, _synth_bins, dump_kernel, load_kernel
from .linsys import dft2

DEFAULT_STEPS = (1e-6, 1e-6, 1e-4, 1e-4)   # Re h, Im h, tau [bins], nu [bins]
COND_LIMIT = 1e12
JITTER = 1e-10
_FIELDS = ("re_h", "im_h", "tau", "nu")


class UnidentifiableError(ValueError):
    pass


@dataclass(frozen=True)
class EtaVector:
    """Real parameter vector of the ``K'`` dominant paths, strongest first."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float).ravel()
        if v.size % 4:
            raise ValueError(f"eta length {v.size} is not a multiple of 4")
        if not np.all(np.isfinite(v)):
            raise ValueError("eta must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def P(self) -> int:
        return self.values.size

    @property
    def num_paths(self) -> int:
        return self.P // 4

    def names(self) -> list[str]:
        return [f"{f}[{k}]" for k in range(self.num_paths) for f in _FIELDS]

    def split(self, values: np.ndarray | None = None):
        """``(h, l, n)``: complex gains and fractional delay/Doppler bins."""
        v = (self.values if values is None else values).reshape(-1, 4)
        return v[:, 0] + 1j * v[:, 1], v[:, 2], v[:, 3]

    @classmethod
    def from_paths(cls, paths: Sequence[tuple[complex, float, float]], grid: DDGrid,
                   k_max: int = 3, rel_floor: float = 1e-2) -> "EtaVector":
        """Keep the ``k_max`` strongest paths with ``|h| > rel_floor * max |h|``.

        Near-zero paths are dropped because their delay and Doppler carry no
        information, which would make the FIM singular.
        """
        paths = sorted(((complex(h), float(t), float(v)) for h, t, v in paths),
                       key=lambda p: -abs(p[0]))
        amax = abs(paths[0][0]) if paths else 0.0
        keep = [p for p in paths[:k_max] if abs(p[0]) > rel_floor * amax]
        vals = [(p[0].real, p[0].imag, p[1] / grid.delta_tau, p[2] / grid.delta_nu) for p in keep]
        return cls(np.array(vals, dtype=float).ravel())

    def to_paths(self, grid: DDGrid) -> list[tuple[complex, float, float]]:
        h, l, n = self.split()
        return [(complex(a), float(b * grid.delta_tau), float(c * grid.delta_nu)) for a, b, c in zip(h, l, n)]


def _freq_response(values: np.ndarray, eta: EtaVector, grid: DDGrid) -> np.ndarray:
    h, l, n = eta.split(values)
    return dft2(_synth_bins(h, l, n, grid))


def mean_response(eta: EtaVector, G_f: np.ndarray, X_f: np.ndarray, grid: DDGrid) -> np.ndarray:
    """Noise-free mean ``vec(H_f * G_f * X_f)`` in row-major order."""
    return (_freq_response(eta.values, eta, grid) * G_f * X_f).ravel()


def jacobian_fd(eta: EtaVector, G_f: np.ndarray, X_f: np.ndarray, grid: DDGrid,
                steps: Sequence[float] = DEFAULT_STEPS) -> np.ndarray:
    """Central-difference Jacobian ``d mu / d eta`` of shape ``(MN, P)``."""
    if len(steps) != 4 or min(steps) <= 0:
        raise ValueError("steps must be four positive values (Re h, Im h, tau, nu)")
    w = (np.asarray(G_f) * np.asarray(X_f)).ravel()
    J = np.empty((grid.M * grid.N, eta.P), dtype=complex)
    base = eta.values
    for p in range(eta.P):
        d = steps[p % 4]
        vp = base.copy(); vp[p] += d
        vm = base.copy(); vm[p] -= d
        J[:, p] = (_freq_response(vp, eta, grid) - _freq_response(vm, eta, grid)).ravel() * w / (2 * d)
    return J


@dataclass(frozen=True)
class FimResult:
    jacobian: np.ndarray
    fim: np.ndarray
    crlb: np.ndarray
    trace: float
    jittered: bool = False


def fim(J: np.ndarray, sigma_w2: float, names: Sequence[str] | None = None) -> FimResult:
    """``I = (2 / sigma^2) Re{J^H J}``, its inverse and trace.

    A zero or numerically vanishing diagonal entry means the parameter does
    not influence the mean at all; that raises :class:`UnidentifiableError`.
    Ill-conditioned but non-degenerate matrices get a small diagonal jitter.
    """
    if sigma_w2 <= 0:
        raise ValueError("sigma_w2 must be positive")
    J = np.asarray(J)
    P = J.shape[1]
    names = list(names) if names is not None else [f"eta[{i}]" for i in range(P)]
    I = (2.0 / sigma_w2) * np.real(J.conj().T @ J)
    I = 0.5 * (I + I.T)
    diag = np.diag(I)
    tr = float(np.trace(I))
    dead = [names[i] for i in range(P) if not diag[i] > 1e-12 * max(diag.max(initial=0.0), 0.0)] if tr > 0 else names
    if dead:
        raise UnidentifiableError(f"unidentifiable parameterization: no information on {', '.join(dead)}")
    jittered = False
    Ij = I
    if np.linalg.cond(I) > COND_LIMIT:
        Ij = I + (JITTER * tr / P) * np.eye(P)
        jittered = True
        if np.linalg.cond(Ij) > 1e3 * COND_LIMIT:
            w, V = np.linalg.eigh(I)
            null = [names[i] for i in np.flatnonzero(np.abs(V[:, 0]) > 0.1)]
            raise UnidentifiableError(f"unidentifiable parameterization: null space spans {', '.join(null)}")
    C = np.linalg.inv(Ij)
    C = 0.5 * (C + C.T)
    return FimResult(J, I, C, float(np.trace(C)), jittered)


def sensing_cost(eta: EtaVector, G_f: np.ndarray, X_f: np.ndarray, sigma_w2: float, grid: DDGrid,
                 steps: Sequence[float] = DEFAULT_STEPS) -> float:
    """``tr C(eta; G)``."""
    return fim(jacobian_fd(eta, G_f, X_f, grid, steps), sigma_w2, eta.names()).trace


@dataclass(frozen=True)
class SensitivityMap:
    grid: DDGrid
    values: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != self.grid.shape or not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValueError("sensitivity values must be finite, non-negative and match the grid")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, grid: DDGrid, value: float = 1.0) -> "SensitivityMap":
        return cls(grid, np.full(grid.shape, value), np.zeros(grid.shape))


def _normalise(raw: np.ndarray) -> np.ndarray:
    raw = np.clip(raw, 0.0, None)
    m = raw.max()
    return raw / m if m > 0 else raw


def post_eq_power(eta: EtaVector, G_f: np.ndarray, grid: DDGrid, H_f: np.ndarray | None = None) -> np.ndarray:
    if H_f is None:
        H_f = _freq_response(eta.values, eta, grid)
    return np.abs(H_f * G_f) ** 2


def sensitivity_fast(eta: EtaVector, G_f_mmse: np.ndarray, X_f: np.ndarray, sigma_w2: float,
                     grid: DDGrid, H_f: np.ndarray | None = None) -> SensitivityMap:
    """First-order ``-dJ_sense/dq`` from Jacobian rows: ``(2/s^2) Re{j C^2 j^H} / q``.

    ``q`` is taken from ``H_f`` (the CSI response) when given, else from the
    kernel of ``eta``.
    """
    q = post_eq_power(eta, G_f_mmse, grid, H_f)
    if eta.P == 0 or not np.any(q > 0):
        return SensitivityMap(grid, np.zeros(grid.shape), q)
    J = jacobian_fd(eta, G_f_mmse, X_f, grid)
    return sensitivity_from_jacobian(J, q, sigma_w2, grid, eta.names())


def sensitivity_from_jacobian(J: np.ndarray, q: np.ndarray, sigma_w2: float, grid: DDGrid,
                              names: Sequence[str] | None = None) -> SensitivityMap:
    """Fast map from a precomputed Jacobian at the expansion point."""
    if J.shape[1] == 0 or not np.any(q > 0):
        return SensitivityMap(grid, np.zeros(grid.shape), q)
    res = fim(J, sigma_w2, names)
    C2 = res.crlb @ res.crlb
    num = (2.0 / sigma_w2) * (np.einsum("bp,pq,bq->b", J.real, C2, J.real)
                              + np.einsum("bp,pq,bq->b", J.imag, C2, J.imag))
    eps_q = 1e-12 * q.max()
    raw = num.reshape(grid.shape) / np.maximum(q, eps_q)
    return SensitivityMap(grid, _normalise(raw), q)


def sensitivity_oracle(eta: EtaVector, G_f_mmse: np.ndarray, X_f: np.ndarray, sigma_w2: float,
                       grid: DDGrid, eps: float = 1e-3, H_f: np.ndarray | None = None) -> SensitivityMap:
    """Direct definition: perturb each bin's post-equalization power by ``1 +/- eps``.

    Every perturbation rebuilds the finite-difference Jacobian and the FIM.
    """
    if eps <= 0 or eps >= 1:
        raise ValueError("eps must be in (0, 1)")
    q = post_eq_power(eta, G_f_mmse, grid, H_f)
    if eta.P == 0 or not np.any(q > 0):
        return SensitivityMap(grid, np.zeros(grid.shape), q)
    eps_q = 1e-12 * q.max()
    G = np.asarray(G_f_mmse, dtype=complex)
    raw = np.zeros(grid.shape)
    up, dn = np.sqrt(1 + eps), np.sqrt(1 - eps)
    for b in np.ndindex(grid.shape):
        if q[b] == 0:
            continue
        Gp = G.copy(); Gp[b] *= up
        Gm = G.copy(); Gm[b] *= dn
        dJ = sensing_cost(eta, Gp, X_f, sigma_w2, grid) - sensing_cost(eta, Gm, X_f, sigma_w2, grid)
        raw[b] = -dJ / (2 * eps * max(q[b], eps_q))
    return SensitivityMap(grid, _normalise(raw), q)


def dump_sensitivity(S: SensitivityMap, path) -> None:
    """Cache a map in the kernel dump format (imaginary parts zero)."""
    dump_kernel(DDKernel(S.grid, S.values.astype(complex)), path)


def load_sensitivity(path) -> SensitivityMap:
    k = load_kernel(path)
    return SensitivityMap(k.grid, k.values.real, np.zeros(k.grid.shape))
