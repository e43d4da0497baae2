"""Delay-Doppler grid and AFDM kernel synthesis.

A channel (or precoder, or effective channel) lives on an ``M x N`` grid of
delay bins ``l`` and Doppler bins ``n``.  Paths with fractional delay/Doppler
indices leak across the grid through Dirichlet kernels; the AFDM chirp
structure couples delay into the Doppler axis through a linear phase.

Doppler bins are interpreted as centred: bin ``n`` represents the signed
frequency index ``n`` for ``n < N/2`` and ``n - N`` otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

# |sin(pi x)| below this is treated as the removable singularity
_SING_TOL = 1e-12


@dataclass(frozen=True)
class DDGrid:
    """Delay-Doppler lattice: ``M`` delay bins of ``delta_tau`` seconds and
    ``N`` Doppler bins of ``delta_nu`` hertz."""

    M: int
    N: int
    delta_tau: float
    delta_nu: float

    def __post_init__(self):
        if self.M < 2 or self.N < 2:
            raise ValueError(f"grid needs M >= 2 and N >= 2, got M={self.M}, N={self.N}")
        if not (self.delta_tau > 0 and self.delta_nu > 0):
            raise ValueError("delta_tau and delta_nu must be positive")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.M, self.N)

    @property
    def max_delay(self) -> float:
        return self.M * self.delta_tau

    @property
    def max_abs_doppler(self) -> float:
        return self.N * self.delta_nu / 2.0

    def signed_doppler_bins(self) -> np.ndarray:
        n = np.arange(self.N)
        return np.where(n < self.N / 2, n, n - self.N)

    def representable(self, delay_s: float, doppler_hz: float) -> bool:
        return 0.0 <= delay_s < self.max_delay and abs(doppler_hz) < self.max_abs_doppler


@dataclass(frozen=True)
class DDKernel:
    """Complex ``M x N`` kernel on a fixed grid (read-only values)."""

    grid: DDGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=complex, copy=True)
        if vals.shape != self.grid.shape:
            raise ValueError(f"kernel shape {vals.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("kernel has non-finite entries")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def power(self) -> float:
        """Mean squared magnitude over the grid."""
        return float(np.mean(np.abs(self.values) ** 2))

    def __add__(self, other: "DDKernel") -> "DDKernel":
        if other.grid != self.grid:
            raise ValueError("kernels live on different grids")
        return DDKernel(self.grid, self.values + other.values)

    def scaled(self, c: complex) -> "DDKernel":
        return DDKernel(self.grid, c * self.values)


@dataclass(frozen=True)
class PowerConfig:
    symbol_energy: float = 1.0
    noise_var: float = 1.0

    def __post_init__(self):
        if not (self.symbol_energy > 0 and self.noise_var > 0):
            raise ValueError("symbol_energy and noise_var must be positive")

    @classmethod
    def from_snr_db(cls, snr_db: float, symbol_energy: float = 1.0) -> "PowerConfig":
        return cls(symbol_energy, symbol_energy / 10.0 ** (snr_db / 10.0))

    @property
    def gamma(self) -> float:
        """Regularisation ``sigma_w^2 / Es`` of the per-bin Wiener filter."""
        return self.noise_var / self.symbol_energy


def nominal_snr(pc: PowerConfig) -> tuple[float, float]:
    """Return ``(snr_db, snr_linear)`` for ``Es / sigma_w^2``."""
    lin = pc.symbol_energy / pc.noise_var
    return 10.0 * math.log10(lin), lin


def dirichlet(x, M: int):
    """Periodic sinc ``sin(pi M x) / (M sin(pi x))``, peak value 1.

    At integer ``x`` the removable singularity resolves to
    ``(-1)**(x (M - 1))``.  Accepts scalars or arrays.
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    xa = np.asarray(x, dtype=float)
    s = np.sin(np.pi * xa)
    sing = np.abs(s) < _SING_TOL
    safe = np.where(sing, 1.0, s)
    out = np.sin(np.pi * M * xa) / (M * safe)
    if np.any(sing):
        k = np.rint(xa)
        out = np.where(sing, np.where((k * (M - 1)) % 2 == 0, 1.0, -1.0), out)
    if np.ndim(out) == 0:
        return float(out)
    return out


def _path_arrays(paths, grid: DDGrid):
    paths = list(paths)
    h = np.array([p[0] for p in paths], dtype=complex)
    tau = np.array([p[1] for p in paths], dtype=float)
    nu = np.array([p[2] for p in paths], dtype=float)
    if not (np.all(np.isfinite(h)) and np.all(np.isfinite(tau)) and np.all(np.isfinite(nu))):
        raise ValueError("path parameters must be finite")
    return h, tau / grid.delta_tau, nu / grid.delta_nu


def synthesize_kernel(paths: Iterable[tuple[complex, float, float]], grid: DDGrid) -> DDKernel:
    """Map ``(h, tau_s, nu_hz)`` paths onto the DD grid.

    ``H[l, n] = sum_k h_k D_M((l - l_k)/M) D_N((n - n_k)/N) exp(-j 2 pi n l_k / N)``
    with fractional indices ``l_k = tau/delta_tau`` and ``n_k = nu/delta_nu``.
    Per-path Dirichlet rows are evaluated once and combined by outer product.
    """
    h, lk, nk = _path_arrays(paths, grid)
    return DDKernel(grid, _synth_bins(h, lk, nk, grid))


def _synth_bins(h: np.ndarray, lk: np.ndarray, nk: np.ndarray, grid: DDGrid) -> np.ndarray:
    """Vectorised synthesis from fractional bin indices (no validation)."""
    if h.size == 0:
        return np.zeros(grid.shape, dtype=complex)
    ell = np.arange(grid.M)
    ns = grid.signed_doppler_bins()
    d_delay = dirichlet((ell[None, :] - lk[:, None]) / grid.M, grid.M)
    d_dopp = dirichlet((ns[None, :] - nk[:, None]) / grid.N, grid.N)
    coupling = np.exp(-2j * np.pi * ns[None, :] * lk[:, None] / grid.N)
    return np.einsum("k,kl,kn->ln", h, d_delay, d_dopp * coupling)


def synthesize_kernel_naive(paths: Sequence[tuple[complex, float, float]], grid: DDGrid) -> DDKernel:
    """Reference double loop over grid cells; used as a test oracle."""
    out = np.zeros(grid.shape, dtype=complex)
    ns = grid.signed_doppler_bins()
    for h, tau, nu in paths:
        lk = tau / grid.delta_tau
        nk = nu / grid.delta_nu
        for ell in range(grid.M):
            for n in range(grid.N):
                out[ell, n] += (
                    complex(h)
                    * dirichlet((ell - lk) / grid.M, grid.M)
                    * dirichlet((ns[n] - nk) / grid.N, grid.N)
                    * np.exp(-2j * np.pi * ns[n] * lk / grid.N)
                )
    return DDKernel(grid, out)


# ----------------------------------------------------------------------------
# text dump: header "M N delta_tau delta_nu", then M rows of N "re,im" pairs
# ----------------------------------------------------------------------------

def dump_kernel(kernel: DDKernel, path) -> None:
    g = kernel.grid
    lines = [f"{g.M} {g.N} {float(g.delta_tau)!r} {float(g.delta_nu)!r}"]
    for row in kernel.values:
        lines.append(" ".join(f"{float(v.real)!r},{float(v.imag)!r}" for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_kernel(path) -> DDKernel:
    text = Path(path).read_text().splitlines()
    head = text[0].split()
    grid = DDGrid(int(head[0]), int(head[1]), float(head[2]), float(head[3]))
    rows = []
    for line in text[1 : 1 + grid.M]:
        rows.append([complex(float(a), float(b)) for a, b in (tok.split(",") for tok in line.split())])
    return DDKernel(grid, np.array(rows))
