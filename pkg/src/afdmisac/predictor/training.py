"""Stage-I training: chronological splits, AdamW, cosine decay, early stopping."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..kernel import DDGrid, _synth_bins
from ..tracking import TrackedSequence
from .features import DecodedPaths, Normalizer, decode, encode
from .gru import GruModel, gru_backward, gru_forward
from .loss import COMPONENTS, LossWeights, composite_loss

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    window: int = 64
    horizon: int = 1
    batch_size: int = 64
    lr: float = 1e-3
    weight_decay: float = 1e-4
    betas: tuple[float, float] = (0.9, 0.999)
    max_epochs: int = 200
    schedule_epochs: int = 200
    clip_norm: float = 1.0
    patience: int = 20
    val_frac: float = 0.15
    test_frac: float = 0.15
    guard: int = 64
    A_min: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if min(self.window, self.horizon, self.batch_size, self.max_epochs, self.schedule_epochs) < 1:
            raise ValueError("window, horizon, batch_size and epoch counts must be positive")
        if self.guard < self.window:
            raise ValueError(f"guard ({self.guard}) must be at least the window length ({self.window})")
        if not (0 < self.val_frac < 1 and 0 < self.test_frac < 1 and self.val_frac + self.test_frac < 1):
            raise ValueError("split fractions must be in (0, 1) and sum below 1")


@dataclass(frozen=True)
class SplitPlan:
    """Frame ranges ``[start, stop)`` of one pass."""

    train: tuple[int, int]
    val: tuple[int, int]
    test: tuple[int, int]
    window: int
    horizon: int

    def train_targets(self) -> np.ndarray:
        a, b = self.train
        return np.arange(a + self.window, b - self.horizon + 1)

    def eval_targets(self, which: str) -> np.ndarray:
        a, b = getattr(self, which)
        return np.arange(max(a, self.window), b - self.horizon + 1)


def chrono_split(T: int, tc: TrainConfig) -> SplitPlan:
    n_test = int(round(T * tc.test_frac))
    n_val = int(round(T * tc.val_frac))
    test = (T - n_test, T)
    val = (test[0] - tc.guard - n_val, test[0] - tc.guard)
    train = (0, val[0] - tc.guard)
    if train[1] - train[0] < tc.window + tc.horizon:
        raise ValueError(f"pass of {T} frames is too short for a training window")
    if n_val < tc.horizon or n_test < tc.horizon:
        raise ValueError(f"pass of {T} frames is too short for validation/test windows")
    plan = SplitPlan(train, val, test, tc.window, tc.horizon)
    check_split_hygiene(plan)
    return plan


def check_split_hygiene(plan: SplitPlan) -> None:
    """No training window may touch validation/test frames; guards >= L."""
    L, H = plan.window, plan.horizon
    tr = plan.train_targets()
    if tr.size and (tr.min() - L < plan.train[0] or tr.max() + H > plan.train[1]):
        raise AssertionError("training window leaves the training range")
    assert plan.val[0] - plan.train[1] >= L, "guard before validation shorter than L"
    assert plan.test[0] - plan.val[1] >= L, "guard before test shorter than L"
    for which in ("val", "test"):
        tg = plan.eval_targets(which)
        if tg.size:
            assert tg.min() - L >= plan.train[1], f"{which} window reaches into training frames"


def make_windows(feat: np.ndarray, A: np.ndarray, targets: np.ndarray, L: int, H: int):
    """Inputs ``(n, L, F)``, targets ``(n, H, F)`` and target amps ``(n, H, K)``.

    ``targets[i]`` is the first predicted frame; inputs are the ``L`` frames before it.
    """
    idx_in = targets[:, None] - L + np.arange(L)[None, :]
    idx_out = targets[:, None] + np.arange(H)[None, :]
    return feat[idx_in], feat[idx_out], A[idx_out]


@dataclass
class PassFeatures:
    arrays: dict[str, np.ndarray]
    feat: np.ndarray
    plan: SplitPlan


def prepare(passes: Sequence[TrackedSequence], tc: TrainConfig, grid: DDGrid):
    plans = [chrono_split(len(p), tc) for p in passes]
    arrs = [p.arrays() for p in passes]
    cat = {k: np.concatenate([a[k][pl.train[0]:pl.train[1]] for a, pl in zip(arrs, plans)])
           for k in ("A", "tau", "nu")}
    norm = Normalizer.fit(cat["A"], cat["tau"], cat["nu"], A_min=tc.A_min,
                          tau_unit=grid.delta_tau, nu_unit=grid.delta_nu)
    data = [PassFeatures(a, encode(a["A"], a["theta"], a["tau"], a["nu"], norm), pl)
            for a, pl in zip(arrs, plans)]
    return norm, data


def kernel_cnmse_batch(pred: np.ndarray, true_arrays: dict, idx: np.ndarray,
                       norm: Normalizer, grid: DDGrid) -> np.ndarray:
    """Per-window kernel CNMSE between decoded first-step predictions and tracked truth."""
    return kernel_cnmse_paths(decode(pred[:, 0], norm), true_arrays, idx, grid)


def kernel_cnmse_paths(dec: DecodedPaths, true_arrays: dict, idx: np.ndarray, grid: DDGrid) -> np.ndarray:
    """CNMSE of kernels synthesized from ``(n, K)`` decoded paths against frames ``idx``."""
    out = np.empty(len(idx))
    for i, t in enumerate(idx):
        Hp = _synth_bins(dec.h[i], dec.tau[i] / grid.delta_tau, dec.nu[i] / grid.delta_nu, grid)
        h = true_arrays["A"][t] * np.exp(1j * true_arrays["theta"][t])
        Ht = _synth_bins(h, true_arrays["tau"][t] / grid.delta_tau, true_arrays["nu"][t] / grid.delta_nu, grid)
        den = np.sum(np.abs(Ht) ** 2)
        out[i] = np.sum(np.abs(Hp - Ht) ** 2) / den if den > 0 else 0.0
    return out


class AdamW:
    def __init__(self, params: dict, lr: float, betas=(0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 0.0):
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.wd = weight_decay
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict, lr: float | None = None) -> None:
        lr = self.lr if lr is None else lr
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for k in sorted(params):       # fixed order keeps runs bit-identical
            g = grads[k]
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            if self.wd and not k.endswith(".b"):
                params[k] -= lr * self.wd * params[k]
            params[k] -= lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def clip_global_norm(grads: dict, max_norm: float) -> float:
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if max_norm > 0 and total > max_norm:
        s = max_norm / (total + 1e-12)
        for k in grads:
            grads[k] *= s
    return total


def cosine_lr(lr0: float, step: int, total: int) -> float:
    return 0.5 * lr0 * (1 + math.cos(math.pi * min(step / max(total, 1), 1.0)))


@dataclass
class TrainResult:
    model: GruModel
    norm: Normalizer
    plans: list[SplitPlan]
    log_rows: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_val: float = math.inf


LOG_COLUMNS = ("epoch", "loss", *(f"L_{c}" for c in COMPONENTS), "val_nmse", "lr")


def train(passes: Sequence[TrackedSequence], model: GruModel | None, tc: TrainConfig,
          lw: LossWeights, grid: DDGrid, hidden: int = 32, proj: int = 16, layers: int = 2,
          residual: bool = False) -> TrainResult:
    """Fit the GRU on the chronological training splits of ``passes``.

    The normaliser is fitted on training frames only.  Validation NMSE is the
    mean kernel CNMSE over validation windows; the best epoch is restored.
    """
    norm, data = prepare(passes, tc, grid)
    K = passes[0].K
    if model is None:
        model = GruModel.init(5 * K, hidden, proj, layers, tc.horizon, residual, seed=tc.seed)
    else:
        model = model.copy()
    if model.n_features != 5 * K or model.horizon != tc.horizon:
        raise ValueError("model shape does not match K / horizon")

    L, H = tc.window, tc.horizon
    Xs, Ys, As = [], [], []
    for d in data:
        x, y, a = make_windows(d.feat, d.arrays["A"], d.plan.train_targets(), L, H)
        Xs.append(x); Ys.append(y); As.append(a)
    Xtr, Ytr, Atr = np.concatenate(Xs), np.concatenate(Ys), np.concatenate(As)
    val_sets = []
    for d in data:
        idx = d.plan.eval_targets("val")
        x, _, _ = make_windows(d.feat, d.arrays["A"], idx, L, H)
        val_sets.append((x, idx, d.arrays))

    rng = np.random.default_rng(tc.seed)
    opt = AdamW(model.params, tc.lr, tc.betas, weight_decay=tc.weight_decay)
    n = len(Xtr)
    steps_per_epoch = math.ceil(n / tc.batch_size)
    total_steps = tc.schedule_epochs * steps_per_epoch
    res = TrainResult(model.copy(), norm, [d.plan for d in data])
    step = 0
    stale = 0
    for epoch in range(1, tc.max_epochs + 1):
        perm = rng.permutation(n)
        sums = dict.fromkeys(COMPONENTS, 0.0)
        tot = 0.0
        lr = cosine_lr(tc.lr, step, total_steps)
        for b0 in range(0, n, tc.batch_size):
            bi = perm[b0:b0 + tc.batch_size]
            out, cache = gru_forward(model, Xtr[bi], return_cache=True)
            loss, comps, g_out = composite_loss(out, Ytr[bi], Atr[bi], lw, norm)
            if not np.isfinite(loss):
                raise RuntimeError(f"training diverged at epoch {epoch}, step {step}: loss={loss}")
            grads = gru_backward(model, cache, g_out)
            clip_global_norm(grads, tc.clip_norm)
            lr = cosine_lr(tc.lr, step, total_steps)
            opt.step(model.params, grads, lr)
            step += 1
            w = len(bi) / n
            tot += w * loss
            for k in COMPONENTS:
                sums[k] += w * comps[k]
        val = float(np.mean(np.concatenate([
            kernel_cnmse_batch(gru_forward(model, x), arr, idx, norm, grid) for x, idx, arr in val_sets
        ])))
        res.log_rows.append({"epoch": epoch, "loss": tot, **{f"L_{k}": sums[k] for k in COMPONENTS},
                             "val_nmse": val, "lr": lr})
        log.debug("epoch %d loss %.5f val %.5f", epoch, tot, val)
        if val < res.best_val:
            res.best_val, res.best_epoch = val, epoch
            res.model = model.copy()
            stale = 0
        else:
            stale += 1
            if stale >= tc.patience:
                break
    return res


def write_log(rows: Sequence[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=LOG_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(float(v)) if k != "epoch" else v) for k, v in r.items()})
