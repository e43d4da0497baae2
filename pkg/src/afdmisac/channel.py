"""Synthetic LEO inter-satellite passes as sparse specular path sequences.

Each path follows a linear delay/Doppler drift with a small smooth jitter,
a mean-reverting log-amplitude walk and a phase that accumulates
``2 pi nu T_frame`` plus a fixed rotation every frame.  Path 1 is the LOS and
never dies; the others may switch off and on, in which case they are emitted
as zero-amplitude placeholders.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .kernel import DDGrid, DDKernel, synthesize_kernel

TRACE_COLUMNS = ("t", "path_id", "amp", "phase", "delay_s", "doppler_hz", "active")


def wrap_phase(x):
    """Wrap into ``[-pi, pi)``."""
    return (np.asarray(x) + np.pi) % (2 * np.pi) - np.pi


@dataclass(frozen=True)
class PathState:
    amp: float
    phase: float
    delay_s: float
    doppler_hz: float
    path_id: int
    active: bool = True

    @property
    def gain(self) -> complex:
        if not self.active:
            return 0j
        return self.amp * complex(math.cos(self.phase), math.sin(self.phase))


@dataclass(frozen=True)
class ChannelSnapshot:
    frame_index: int
    paths: tuple[PathState, ...]


@dataclass(frozen=True)
class PathSpec:
    """Initial ranges and drift of one path; delays/Dopplers in grid bins."""

    amp_range: tuple[float, float]
    delay_range: tuple[float, float]
    doppler_range: tuple[float, float]
    delay_slope: float = 0.0        # bins / frame
    doppler_slope: float = 0.0      # bins / frame
    amp_logdrift_std: float = 0.0
    phase_rate: float = 0.0         # rad / frame on top of the Doppler rotation


@dataclass(frozen=True)
class PassConfig:
    grid: DDGrid
    paths: tuple[PathSpec, ...]
    num_frames: int = 1500
    rng_seed: int = 0
    frame_period: float | None = None   # defaults to 1 / (4 N delta_nu)
    birth_death_prob: float = 0.0
    delay_jitter: float = 0.0           # bins, std of the smooth jitter
    doppler_jitter: float = 0.0         # bins
    jitter_corr: float = 0.95
    amp_revert: float = 0.02
    phase_noise_std: float = 0.0        # rad / frame, independent Wiener phase per path

    @property
    def num_paths(self) -> int:
        return len(self.paths)

    @property
    def t_frame(self) -> float:
        if self.frame_period is not None:
            return self.frame_period
        return 1.0 / (4.0 * self.grid.N * self.grid.delta_nu)

    def validate(self) -> None:
        if self.num_paths < 1:
            raise ValueError("paths: at least the LOS path is required")
        if self.num_frames < 1:
            raise ValueError("num_frames must be >= 1")
        if not 0.0 <= self.birth_death_prob <= 1.0:
            raise ValueError("birth_death_prob must lie in [0, 1]")
        if self.t_frame <= 0:
            raise ValueError("frame_period must be positive")
        if self.phase_noise_std < 0:
            raise ValueError("phase_noise_std must be non-negative")
        g = self.grid
        span = self.num_frames - 1
        for i, p in enumerate(self.paths, start=1):
            if not 0 <= p.amp_range[0] <= p.amp_range[1]:
                raise ValueError(f"paths[{i}].amp_range must be non-negative and ordered")
            lo = min(p.delay_range[0], p.delay_range[0] + span * p.delay_slope) - 4 * self.delay_jitter
            hi = max(p.delay_range[1], p.delay_range[1] + span * p.delay_slope) + 4 * self.delay_jitter
            if lo < 0 or hi >= g.M:
                raise ValueError(
                    f"paths[{i}].delay_range/delay_slope leave the grid: delay spans "
                    f"[{lo:.3g}, {hi:.3g}] bins, must stay inside [0, {g.M})")
            lo = min(p.doppler_range[0], p.doppler_range[0] + span * p.doppler_slope) - 4 * self.doppler_jitter
            hi = max(p.doppler_range[1], p.doppler_range[1] + span * p.doppler_slope) + 4 * self.doppler_jitter
            if lo <= -g.N / 2 or hi >= g.N / 2:
                raise ValueError(
                    f"paths[{i}].doppler_range/doppler_slope leave the grid: Doppler spans "
                    f"[{lo:.3g}, {hi:.3g}] bins, must stay inside (-{g.N / 2}, {g.N / 2})")


def _smooth_jitter(rng, n, std, corr):
    if std == 0.0:
        return np.zeros(n)
    e = rng.standard_normal(n) * std * math.sqrt(1 - corr ** 2)
    out = np.empty(n)
    acc = rng.standard_normal() * std
    for t in range(n):
        acc = corr * acc + e[t]
        out[t] = acc
    return np.clip(out, -4 * std, 4 * std)


def generate_pass(cfg: PassConfig) -> list[ChannelSnapshot]:
    """Deterministic function of ``cfg`` (including ``rng_seed``)."""
    cfg.validate()
    g = cfg.grid
    T = cfg.num_frames
    rng = np.random.default_rng(cfg.rng_seed)
    t_idx = np.arange(T)
    tf = cfg.t_frame

    amp = np.empty((cfg.num_paths, T))
    phase = np.empty((cfg.num_paths, T))
    delay = np.empty((cfg.num_paths, T))
    dopp = np.empty((cfg.num_paths, T))
    active = np.ones((cfg.num_paths, T), dtype=bool)

    for i, p in enumerate(cfg.paths):
        a0 = rng.uniform(*p.amp_range)
        d0 = rng.uniform(*p.delay_range)
        v0 = rng.uniform(*p.doppler_range)
        ph0 = rng.uniform(-np.pi, np.pi)
        delay[i] = d0 + t_idx * p.delay_slope + _smooth_jitter(rng, T, cfg.delay_jitter, cfg.jitter_corr)
        dopp[i] = v0 + t_idx * p.doppler_slope + _smooth_jitter(rng, T, cfg.doppler_jitter, cfg.jitter_corr)
        delay[i] = np.clip(delay[i], 0.0, np.nextafter(g.M, 0))
        half = g.N / 2
        dopp[i] = np.clip(dopp[i], np.nextafter(-half, 0), np.nextafter(half, 0))

        la = np.empty(T)
        la[0] = math.log(a0) if a0 > 0 else -np.inf
        steps = rng.standard_normal(T) * p.amp_logdrift_std
        for t in range(1, T):
            la[t] = la[t - 1] + cfg.amp_revert * (la[0] - la[t - 1]) + steps[t]
        if p.amp_logdrift_std > 0:
            bound = 3 * p.amp_logdrift_std / math.sqrt(max(cfg.amp_revert * (2 - cfg.amp_revert), 1e-12))
            la = np.clip(la, la[0] - bound, la[0] + bound)
        amp[i] = np.exp(la)

        adv = 2 * np.pi * dopp[i] * g.delta_nu * tf + p.phase_rate
        phase[i, 0] = ph0
        phase[i, 1:] = ph0 + np.cumsum(adv[:-1])
        if cfg.phase_noise_std > 0:
            phase[i, 1:] += np.cumsum(rng.standard_normal(T - 1) * cfg.phase_noise_std)
        phase[i] = wrap_phase(phase[i])

        if i > 0 and cfg.birth_death_prob > 0:
            flips = rng.random(T) < cfg.birth_death_prob
            state = True
            for t in range(T):
                if t > 0 and flips[t]:
                    state = not state
                active[i, t] = state

    snaps = []
    for t in range(T):
        paths = tuple(
            PathState(
                amp=float(amp[i, t]) if active[i, t] else 0.0,
                phase=float(phase[i, t]),
                delay_s=float(delay[i, t] * g.delta_tau),
                doppler_hz=float(dopp[i, t] * g.delta_nu),
                path_id=i + 1,
                active=bool(active[i, t]),
            )
            for i in range(cfg.num_paths)
        )
        snaps.append(ChannelSnapshot(t, paths))
    return snaps


def snapshot_theta(s: ChannelSnapshot) -> list[tuple[complex, float, float]]:
    """``(h, tau_s, nu_hz)`` per path; inactive paths carry ``h = 0``."""
    return [(p.gain, p.delay_s, p.doppler_hz) for p in s.paths]


def snapshot_kernel(s: ChannelSnapshot, grid: DDGrid) -> DDKernel:
    return synthesize_kernel(snapshot_theta(s), grid)


# ----------------------------------------------------------------------------
# presets
# ----------------------------------------------------------------------------

DEFAULT_GRID = DDGrid(M=16, N=16, delta_tau=1e-8, delta_nu=1e3)


def preset(name: str, grid: DDGrid = DEFAULT_GRID, num_frames: int = 1500,
           seed: int | None = None) -> PassConfig:
    """Synthetic emulations of the three passes (not reproductions).

    ``channel2``: one dominant concentrated cluster (easiest);
    ``channel3``: faster Doppler drift, more clusters, path births/deaths;
    ``channel1``: in between.  Ranges are given for a 16 x 16 grid and scaled
    to other grid sizes.
    """
    sm, sn = grid.M / 16.0, grid.N / 16.0

    def spec(amp, dly, dop, dslope=0.0, vslope=0.0, astd=0.0, prate=0.0):
        return PathSpec(amp, (dly[0] * sm, dly[1] * sm), (dop[0] * sn, dop[1] * sn),
                        dslope * sm, vslope * sn, astd, prate)

    span = 1500.0 / num_frames
    if name == "channel2":
        paths = (
            spec((0.9, 1.0), (2.0, 2.4), (1.2, 1.6), 0.0008 * span, 0.0006 * span, 0.01, 0.25),
            spec((0.15, 0.2), (5.0, 5.4), (-1.2, -0.8), 0.0006 * span, 0.0004 * span, 0.02, 0.35),
        )
        kw = dict(birth_death_prob=0.0, delay_jitter=0.01, doppler_jitter=0.01, phase_noise_std=0.2)
        default_seed = 2002
    elif name == "channel1":
        paths = (
            spec((0.9, 1.0), (1.5, 2.0), (0.8, 1.2), 0.0010 * span, 0.0012 * span, 0.015, 0.25),
            spec((0.4, 0.5), (6.0, 6.5), (-3.2, -2.8), 0.0008 * span, -0.0010 * span, 0.02, 0.60),
            spec((0.25, 0.3), (10.0, 10.5), (3.8, 4.2), -0.0010 * span, 0.0008 * span, 0.02, 0.05),
        )
        kw = dict(birth_death_prob=0.0, delay_jitter=0.015, doppler_jitter=0.015, phase_noise_std=0.22)
        default_seed = 1001
    elif name == "channel3":
        paths = (
            spec((0.9, 1.0), (1.0, 1.5), (-1.0, -0.5), 0.0012 * span, 0.0030 * span, 0.02, 0.45),
            spec((0.5, 0.6), (5.0, 5.5), (2.5, 3.0), 0.0010 * span, 0.0025 * span, 0.03, 0.20),
            spec((0.35, 0.45), (9.0, 9.5), (-4.8, -4.4), -0.0012 * span, 0.0030 * span, 0.03, -0.45),
            spec((0.3, 0.4), (12.5, 13.0), (5.0, 5.5), -0.0010 * span, -0.0025 * span, 0.03, 0.15),
        )
        kw = dict(birth_death_prob=0.002, delay_jitter=0.02, doppler_jitter=0.02, phase_noise_std=0.25)
        default_seed = 3003
    else:
        raise ValueError(f"unknown preset {name!r}; choose channel1, channel2 or channel3")
    return PassConfig(grid=grid, paths=paths, num_frames=num_frames,
                      rng_seed=default_seed if seed is None else seed, **kw)


PRESETS = ("channel1", "channel2", "channel3")


# ----------------------------------------------------------------------------
# trace table
# ----------------------------------------------------------------------------

def export_pass(snaps: Sequence[ChannelSnapshot], path) -> None:
    """Write one CSV row per frame per path."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for s in snaps:
            for p in s.paths:
                w.writerow([s.frame_index, p.path_id, repr(p.amp), repr(p.phase),
                            repr(p.delay_s), repr(p.doppler_hz), int(p.active)])


def import_pass(path) -> list[ChannelSnapshot]:
    frames: dict[int, list[PathState]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(TRACE_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        for row in reader:
            act = bool(int(row["active"]))
            st = PathState(
                amp=float(row["amp"]) if act else 0.0,
                phase=float(wrap_phase(float(row["phase"]))),
                delay_s=float(row["delay_s"]),
                doppler_hz=float(row["doppler_hz"]),
                path_id=int(row["path_id"]),
                active=act,
            )
            frames.setdefault(int(row["t"]), []).append(st)
    out = []
    prev = -1
    for t in sorted(frames):
        if t <= prev:
            raise ValueError(f"{path}: frame indices must increase")
        prev = t
        out.append(ChannelSnapshot(t, tuple(sorted(frames[t], key=lambda p: p.path_id))))
    return out


def with_seed(cfg: PassConfig, seed: int) -> PassConfig:
    return replace(cfg, rng_seed=seed)
