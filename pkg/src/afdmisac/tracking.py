"""Dominant-path selection and identity tracking across frames.

Per frame the ``K`` strongest paths are kept and associated with the previous
frame's slots by a gated one-to-one assignment on a normalised delay-Doppler
distance.  Slots whose path disappears are kept as zero-amplitude placeholders
that remember their last delay/Doppler, so a path that returns near where it
vanished reclaims its slot.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .channel import ChannelSnapshot, TRACE_COLUMNS, wrap_phase
from .kernel import DDGrid

# stand-in for +inf inside the assignment solver
_BLOCKED = 1e12


@dataclass(frozen=True)
class TrackConfig:
    K: int = 4
    w_tau: float = 1.0
    w_nu: float = 1.0
    gate: float = 2.0
    tau_scale: float = 1e-8
    nu_scale: float = 1e3

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if self.w_tau < 0 or self.w_nu < 0 or self.w_tau + self.w_nu <= 0:
            raise ValueError("weights must be non-negative with a positive sum")
        if self.gate <= 0 or self.tau_scale <= 0 or self.nu_scale <= 0:
            raise ValueError("gate and scales must be positive")

    @classmethod
    def for_grid(cls, grid: DDGrid, **kw) -> "TrackConfig":
        return cls(tau_scale=grid.delta_tau, nu_scale=grid.delta_nu, **kw)


@dataclass(frozen=True)
class SlotParams:
    """One slot's path tuple; ``A == 0`` marks a placeholder."""

    A: float
    theta: float
    tau: float
    nu: float
    matched: bool = True
    valid: bool = True      # False until the slot has ever held a path

    @property
    def gain(self) -> complex:
        return self.A * complex(math.cos(self.theta), math.sin(self.theta))


EMPTY = SlotParams(0.0, 0.0, 0.0, 0.0, matched=False, valid=False)


def select_topk(s: ChannelSnapshot, K: int) -> list[SlotParams]:
    """The ``K`` strongest active paths, padded with placeholders.

    Ties are broken by smaller delay, then smaller ``path_id``.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    act = [p for p in s.paths if p.active and p.amp > 0]
    act.sort(key=lambda p: (-p.amp, p.delay_s, p.path_id))
    out = [SlotParams(p.amp, float(wrap_phase(p.phase)), p.delay_s, p.doppler_hz) for p in act[:K]]
    return out + [EMPTY] * (K - len(out))


def match_cost(prev: Sequence[SlotParams], curr: Sequence[SlotParams], cfg: TrackConfig) -> np.ndarray:
    """Pairwise cost; pairs involving never-used slots or empty candidates are +inf."""
    C = np.full((len(prev), len(curr)), np.inf)
    for i, p in enumerate(prev):
        if not p.valid:
            continue
        for j, c in enumerate(curr):
            if not c.valid or c.A <= 0:
                continue
            C[i, j] = (cfg.w_tau * abs(p.tau - c.tau) / cfg.tau_scale
                       + cfg.w_nu * abs(p.nu - c.nu) / cfg.nu_scale)
    return C


def _gated(C: np.ndarray, gate: float) -> np.ndarray:
    """Pairs beyond the gate are disallowed before solving, not after."""
    return np.where(C <= gate, C, np.inf)


def match_paths(prev: Sequence[SlotParams], curr: Sequence[SlotParams], cfg: TrackConfig):
    """Gated optimal one-to-one assignment.

    Returns ``(assign, total_cost)`` where ``assign[i]`` is the index of the
    current path matched to previous slot ``i`` or ``-1`` if unmatched.
    """
    C = _gated(match_cost(prev, curr, cfg), cfg.gate)
    rows, cols = linear_sum_assignment(np.where(np.isfinite(C), C, _BLOCKED))
    assign = [-1] * len(prev)
    total = 0.0
    for r, c in zip(rows, cols):
        if np.isfinite(C[r, c]):
            assign[r] = int(c)
            total += float(C[r, c])
    return assign, total


def match_paths_bruteforce(prev, curr, cfg: TrackConfig):
    """Exhaustive search over all permutations (``K <= 4``), test oracle."""
    C = _gated(match_cost(prev, curr, cfg), cfg.gate)
    finite = np.where(np.isfinite(C), C, _BLOCKED)
    n = len(prev)
    best, best_perm = math.inf, None
    for perm in itertools.permutations(range(len(curr)), n):
        tot = sum(finite[i, perm[i]] for i in range(n))
        if tot < best:
            best, best_perm = tot, perm
    assign = [-1] * n
    total = 0.0
    for i, j in enumerate(best_perm):
        if np.isfinite(C[i, j]):
            assign[i] = j
            total += float(C[i, j])
    return assign, total


@dataclass
class TrackedSequence:
    """``frames[t][k]`` is slot ``k`` at frame ``t``."""

    frames: list[list[SlotParams]]
    frame_index: list[int]

    @property
    def K(self) -> int:
        return len(self.frames[0]) if self.frames else 0

    def __len__(self) -> int:
        return len(self.frames)

    def arrays(self) -> dict[str, np.ndarray]:
        """Stacked ``(T, K)`` arrays of ``A``, ``theta``, ``tau``, ``nu``, ``matched``."""
        return {
            "A": np.array([[s.A for s in f] for f in self.frames]),
            "theta": np.array([[s.theta for s in f] for f in self.frames]),
            "tau": np.array([[s.tau for s in f] for f in self.frames]),
            "nu": np.array([[s.nu for s in f] for f in self.frames]),
            "matched": np.array([[s.matched for s in f] for f in self.frames]),
        }


def track_pass(snaps: Sequence[ChannelSnapshot], cfg: TrackConfig) -> TrackedSequence:
    """Sequential fold of ``select_topk`` + ``match_paths`` over a pass."""
    K = cfg.K
    slots = [EMPTY] * K
    frames = []
    for t, s in enumerate(snaps):
        curr = select_topk(s, K)
        if t == 0:
            new = list(curr)
        else:
            assign, _ = match_paths(slots, curr, cfg)
            new = [None] * K
            used = set()
            for i, j in enumerate(assign):
                if j >= 0:
                    c = curr[j]
                    new[i] = SlotParams(c.A, c.theta, c.tau, c.nu, True, True)
                    used.add(j)
            pending = [j for j, c in enumerate(curr) if c.valid and j not in used]
            # unmatched candidates open slots; prefer never-used, then stalest placeholders
            free = [i for i in range(K) if new[i] is None and not slots[i].valid]
            free += [i for i in range(K) if new[i] is None and slots[i].valid and slots[i].A == 0]
            free += [i for i in range(K) if new[i] is None and slots[i].valid and slots[i].A > 0]
            for j in pending:
                if not free:
                    break
                i = free.pop(0)
                c = curr[j]
                new[i] = SlotParams(c.A, c.theta, c.tau, c.nu, True, True)
            for i in range(K):
                if new[i] is None:
                    p = slots[i]
                    new[i] = SlotParams(0.0, p.theta, p.tau, p.nu, False, p.valid)
        slots = new
        frames.append(list(slots))
    return TrackedSequence(frames, [s.frame_index for s in snaps])


def export_tracked(seq: TrackedSequence, path) -> None:
    """Same table layout as the pass trace, with the slot index as ``path_id``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for t, f in zip(seq.frame_index, seq.frames):
            for k, s in enumerate(f):
                w.writerow([t, k + 1, repr(s.A), repr(s.theta), repr(s.tau), repr(s.nu), int(s.matched)])
