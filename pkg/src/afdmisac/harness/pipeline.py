"""Stage-I training/evaluation, Stage-II lambda sweeps, lambda* selection and ablations."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..channel import ChannelSnapshot, generate_pass, import_pass, preset, snapshot_kernel, snapshot_theta, with_seed
from ..fisher import EtaVector, SensitivityMap, _normalise, fim, jacobian_fd, sensitivity_from_jacobian
from ..kernel import DDKernel, _synth_bins
from ..linsys import dft2, idft2
from ..metrics import (Constellation, cnmse, demodulate, mae_phase, receive, smape_amp,
                       summarize)
from ..predictor import (DecodedPaths, GruModel, Normalizer, baseline_predict, chrono_split,
                         encode, gru_forward, decode, train)
from ..predictor.training import TrainResult
from ..preeq import PreeqConfig, build_preequalizer
from ..tracking import TrackConfig, TrackedSequence, track_pass
from .config import ExperimentConfig

log = logging.getLogger(__name__)

PREDICTORS = ("gru", "persistence", "linear_extrapolation")


@dataclass
class PassBundle:
    name: str
    snaps: list[ChannelSnapshot]
    tracked: TrackedSequence


def build_passes(cfg: ExperimentConfig, pass_dir=None) -> list[PassBundle]:
    """Generate and track every configured preset (seed offset by ``cfg.seed``).

    With ``pass_dir``, traces are imported from ``{pass_dir}/{preset}.csv``
    instead (the :func:`~afdmisac.channel.export_pass` format).
    """
    grid = cfg.grid
    out = []
    for name in cfg.presets:
        if pass_dir is not None:
            snaps = import_pass(Path(pass_dir) / f"{name}.csv")
        else:
            pc = preset(name, grid, cfg.num_frames)
            snaps = generate_pass(with_seed(pc, pc.rng_seed + cfg.seed))
        out.append(PassBundle(name, snaps, track_pass(snaps, TrackConfig.for_grid(grid, K=cfg.K))))
    return out


# ----------------------------------------------------------------------------
# Stage I
# ----------------------------------------------------------------------------

STAGE1_COLUMNS = ("pass", "predictor", "n_frames", "cnmse_mean", "cnmse_p50", "cnmse_p90",
                  "smape_amp", "mae_phase_deg")


@dataclass
class Stage1Result:
    model: GruModel
    norm: Normalizer
    metrics: list[dict]
    training: TrainResult | None = None


def _stack(paths: list[DecodedPaths]) -> DecodedPaths:
    return DecodedPaths(*(np.array([getattr(p, f) for p in paths]) for f in ("A", "theta", "tau", "nu")))


def test_targets(cfg: ExperimentConfig, bundle: PassBundle) -> np.ndarray:
    return chrono_split(len(bundle.tracked), cfg.train_config()).eval_targets("test")


def predict_pass(model: GruModel, norm: Normalizer, bundle: PassBundle, targets: np.ndarray,
                 window: int, kind: str = "gru") -> DecodedPaths:
    """Decoded one-step predictions ``(n, K)`` for frames ``targets``."""
    arr = bundle.tracked.arrays()
    if kind == "gru":
        feat = encode(arr["A"], arr["theta"], arr["tau"], arr["nu"], norm)
        idx = targets[:, None] - window + np.arange(window)[None, :]
        return decode(gru_forward(model, feat[idx])[:, 0], norm)
    hist = [baseline_predict(kind, *(arr[k][t - 2:t] for k in ("A", "theta", "tau", "nu")),
                             A_min=norm.A_min) for t in targets]
    return _stack(hist)


def _kernel(p: DecodedPaths, i: int, grid) -> DDKernel:
    return DDKernel(grid, _synth_bins(p.h[i], p.tau[i] / grid.delta_tau, p.nu[i] / grid.delta_nu, grid))


def evaluate_stage1(cfg: ExperimentConfig, passes: list[PassBundle], model: GruModel,
                    norm: Normalizer) -> list[dict]:
    """Held-out CNMSE / SMAPE / phase MAE of the GRU and both baselines per pass."""
    grid = cfg.grid
    rows = []
    for b in passes:
        tg = test_targets(cfg, b)
        arr = b.tracked.arrays()
        truth = [snapshot_kernel(b.snaps[t], grid) for t in tg]
        A_t, th_t = arr["A"][tg], arr["theta"][tg]
        live = A_t > 0
        for kind in PREDICTORS:
            pred = predict_pass(model, norm, b, tg, cfg.window, kind)
            c = [cnmse(truth[i], _kernel(pred, i, grid)) for i in range(len(tg))]
            s = summarize(c)
            rows.append({
                "pass": b.name, "predictor": kind, "n_frames": len(tg),
                "cnmse_mean": s.mean, "cnmse_p50": s.p50, "cnmse_p90": s.p90,
                "smape_amp": smape_amp(A_t[live], pred.A[live]),
                "mae_phase_deg": mae_phase(th_t, pred.theta, weights=A_t),
            })
    return rows


def run_stage1(cfg: ExperimentConfig, passes: list[PassBundle]) -> Stage1Result:
    """Train one GRU on the training splits of all passes, then evaluate on test splits."""
    res = train([b.tracked for b in passes], None, cfg.train_config(), cfg.loss_weight_config(),
                cfg.grid, hidden=cfg.hidden, proj=cfg.proj, layers=cfg.layers, residual=cfg.residual)
    log.info("stage I: best epoch %d, val CNMSE %.4f", res.best_epoch, res.best_val)
    return Stage1Result(res.model, res.norm, evaluate_stage1(cfg, passes, res.model, res.norm), res)


# ----------------------------------------------------------------------------
# Stage II
# ----------------------------------------------------------------------------

SWEEP_COLUMNS = ("experiment", "pass", "snr_db", "lambda", "csi_mode", "mse", "ser",
                 "crlb_ratio", "cnmse_mean", "seed")


@dataclass(frozen=True)
class SweepRow:
    experiment: str
    pass_name: str
    snr_db: float
    lam: float
    csi_mode: str
    mse: float
    ser: float
    crlb_ratio: float
    cnmse_mean: float
    seed: int

    def as_csv(self) -> dict:
        d = asdict(self)
        d["pass"] = d.pop("pass_name")
        d["lambda"] = d.pop("lam")
        return d


@dataclass
class FrameCsi:
    """SNR-independent quantities of one (pass, mode, frame)."""

    H_csi: DDKernel
    H_csi_f: np.ndarray
    eta: EtaVector
    JH: np.ndarray            # d dft2(H) / d eta, no precoder
    cnmse: float


@dataclass
class SweepContext:
    cfg: ExperimentConfig
    passes: list[PassBundle]
    frames: dict[str, np.ndarray]                    # pass -> evaluated frame indices
    truth_f: dict[tuple[str, int], np.ndarray]       # (pass, t) -> dft2(H_true)
    csi: dict[tuple[str, str, int], FrameCsi]        # (pass, mode, t)
    s_cache: dict[tuple[str, int, float, str], SensitivityMap] = field(default_factory=dict)


def prepare_sweep(cfg: ExperimentConfig, passes: list[PassBundle], model: GruModel | None,
                  norm: Normalizer | None) -> SweepContext:
    """CSI kernels, dominant-path vectors and unit Jacobians for every evaluated frame."""
    grid = cfg.grid
    ones = np.ones(grid.shape)
    frames, truth_f, csi = {}, {}, {}
    for b in passes:
        tg = test_targets(cfg, b)
        tg = tg[tg >= cfg.lag][:cfg.eval_frames]
        if tg.size == 0:
            raise ValueError(f"pass {b.name} has no evaluation frames")
        frames[b.name] = tg
        for t in tg:
            truth_f[(b.name, int(t))] = dft2(snapshot_kernel(b.snaps[t], grid).values)
        pred = None
        if "predicted" in cfg.modes:
            if model is None or norm is None:
                raise ValueError("predicted CSI mode requires a Stage-I checkpoint")
            pred = predict_pass(model, norm, b, tg, cfg.window)
        for mode in cfg.modes:
            for i, t in enumerate(tg):
                if mode == "predicted":
                    paths = list(zip(pred.h[i], pred.tau[i], pred.nu[i]))
                elif mode == "outdated":
                    paths = snapshot_theta(b.snaps[t - cfg.lag])
                else:
                    paths = snapshot_theta(b.snaps[t])
                H = DDKernel(grid, _synth_bins(*_bins(paths, grid), grid))
                eta = EtaVector.from_paths(paths, grid, k_max=cfg.k_prime)
                truth = DDKernel(grid, idft2(truth_f[(b.name, int(t))]))
                csi[(b.name, mode, int(t))] = FrameCsi(
                    H, dft2(H.values), eta, jacobian_fd(eta, ones, ones, grid), cnmse(truth, H))
    return SweepContext(cfg, passes, frames, truth_f, csi)


def _bins(paths, grid):
    h = np.array([p[0] for p in paths], dtype=complex)
    return (h, np.array([p[1] for p in paths], float) / grid.delta_tau,
            np.array([p[2] for p in paths], float) / grid.delta_nu)


def baseline_sensitivity(ctx: SweepContext, pass_name: str, t: int, snr_db: float, mode: str) -> SensitivityMap:
    """Fast map at the MMSE expansion point, cached per (pass, frame, SNR, mode)."""
    key = (pass_name, t, snr_db, mode)
    S = ctx.s_cache.get(key)
    if S is None:
        fc = ctx.csi[(pass_name, mode, t)]
        pc = ctx.cfg.power(snr_db)
        G0 = np.conj(fc.H_csi_f) / (np.abs(fc.H_csi_f) ** 2 + pc.gamma)
        q = np.abs(fc.H_csi_f * G0) ** 2
        S = sensitivity_from_jacobian(fc.JH * G0.reshape(-1, 1), q, pc.noise_var, ctx.cfg.grid,
                                      fc.eta.names())
        ctx.s_cache[key] = S
    return S


def _variant_map(ctx: SweepContext, S: SensitivityMap, variant: str) -> SensitivityMap:
    grid = ctx.cfg.grid
    if variant == "SfConst":
        return SensitivityMap.constant(grid)
    if variant == "SfRandom":
        pattern = np.random.default_rng(ctx.cfg.random_pattern_seed).uniform(size=grid.shape)
        return SensitivityMap(grid, _normalise(np.abs(S.values) * pattern), S.q)
    return S


def _mc_draws(cfg: ExperimentConfig, c: Constellation, p_idx: int, t: int, s_idx: int, per_frame: int):
    """Symbols and unit noise shared by every mode, lambda and variant (common random numbers)."""
    rng = np.random.default_rng([cfg.seed, p_idx, t, s_idx])
    shape = (per_frame, cfg.M, cfg.N)
    idx = rng.integers(0, c.order, size=shape)
    X = c.points[idx]
    W = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2)
    return X, idx, W


def _sweep_point(ctx: SweepContext, p_idx: int, s_idx: int, mode: str, variant: str) -> list[SweepRow]:
    cfg = ctx.cfg
    grid = cfg.grid
    b = ctx.passes[p_idx]
    snr = cfg.snr_db[s_idx]
    pc = cfg.power(snr)
    c = Constellation(cfg.order, pc.symbol_energy)
    MN = grid.M * grid.N
    noise = MN * pc.noise_var
    per_frame = max(1, cfg.mc_frames // len(ctx.frames[b.name]))
    lams = sorted(cfg.lambdas)
    acc = {l: np.zeros(4) for l in lams}          # mse, ser, crlb ratio, cnmse
    for t in ctx.frames[b.name]:
        t = int(t)
        fc = ctx.csi[(b.name, mode, t)]
        S = _variant_map(ctx, baseline_sensitivity(ctx, b.name, t, snr, mode), variant)
        X, idx, W = _mc_draws(cfg, c, p_idx, t, s_idx, per_frame)
        Xf = dft2(X)
        Htf = ctx.truth_f[(b.name, t)]
        J0 = None
        for lam in lams:
            pq = PreeqConfig(lambda_isac=lam, gamma=pc.gamma, normalize_heff=(variant != "noNorm"))
            G = build_preequalizer(fc.H_csi, S, pq, pc)
            Gf = dft2(G.values)
            Heff_f = Htf * Gf
            if pq.normalize_heff:
                Heff_f = Heff_f / math.sqrt(np.mean(np.abs(idft2(Heff_f)) ** 2))
            Heff = DDKernel(grid, idft2(Heff_f))
            Y = idft2(Heff_f * Xf) + math.sqrt(noise) * W
            soft, unb = receive(Y, Heff, pc.symbol_energy, noise)
            mse = float(np.mean(np.abs(soft - X) ** 2))
            ser = float(np.mean(demodulate(unb, c) != idx))
            J = fim(fc.JH * Gf.reshape(-1, 1), pc.noise_var, fc.eta.names()).trace
            if lam == 0:
                J0 = J
            acc[lam] += (mse, ser, 1.0 if lam == 0 else J / J0, fc.cnmse)
    n = len(ctx.frames[b.name])
    return [SweepRow(variant, b.name, float(snr), float(l), mode, *(acc[l] / n), cfg.seed) for l in lams]


def run_lambda_sweep(ctx: SweepContext, variant: str = "none", modes=None) -> list[SweepRow]:
    """One row per (pass, SNR, lambda, mode), in that nesting order."""
    cfg = ctx.cfg
    modes = tuple(cfg.modes if modes is None else modes)
    tasks = [(p, s, m) for p in range(len(ctx.passes)) for s in range(len(cfg.snr_db)) for m in modes]
    # sensitivity maps are filled up front so worker threads only read the cache
    for p, s, m in tasks:
        for t in ctx.frames[ctx.passes[p].name]:
            baseline_sensitivity(ctx, ctx.passes[p].name, int(t), cfg.snr_db[s], m)
    if cfg.threads > 1:
        with ThreadPoolExecutor(cfg.threads) as ex:
            chunks = list(ex.map(lambda a: _sweep_point(ctx, *a, variant), tasks))
    else:
        chunks = [_sweep_point(ctx, *a, variant) for a in tasks]
    return [r for ch in chunks for r in ch]


# ----------------------------------------------------------------------------
# lambda* and ablations
# ----------------------------------------------------------------------------

LSTAR_COLUMNS = ("experiment", "pass", "snr_db", "csi_mode", "lambda_star", "g_mse")
SUMMARY_COLUMNS = ("experiment", "snr_db", "csi_mode", "n", "lambda_star_median", "lambda_star_iqr",
                   "g_mse_median", "g_mse_iqr")


def select_lambda_star(rows: list[SweepRow]) -> tuple[list[dict], list[dict]]:
    """Per-(experiment, pass, SNR, mode) ``lambda*`` and the median/IQR across passes.

    ``g_MSE = (MSE(0) - MSE(lambda)) / MSE(0)``; ties go to the smallest lambda.
    """
    groups: dict[tuple, list[SweepRow]] = {}
    for r in rows:
        groups.setdefault((r.experiment, r.pass_name, r.snr_db, r.csi_mode), []).append(r)
    per = []
    for key, rs in groups.items():
        rs = sorted(rs, key=lambda r: r.lam)
        base = [r for r in rs if r.lam == 0]
        if not base:
            raise ValueError(f"no lambda = 0 row for {key}")
        m0 = base[0].mse
        best_l, best_g = 0.0, 0.0
        for r in rs:
            g = (m0 - r.mse) / m0 if m0 > 0 else 0.0
            if g > best_g:
                best_l, best_g = r.lam, g
        per.append({"experiment": key[0], "pass": key[1], "snr_db": key[2], "csi_mode": key[3],
                    "lambda_star": best_l, "g_mse": best_g})
    summ = {}
    for d in per:
        summ.setdefault((d["experiment"], d["snr_db"], d["csi_mode"]), []).append(d)
    summary = []
    for (exp, snr, mode), ds in summ.items():
        ls = np.array([d["lambda_star"] for d in ds])
        gs = np.array([d["g_mse"] for d in ds])
        summary.append({
            "experiment": exp, "snr_db": snr, "csi_mode": mode, "n": len(ds),
            "lambda_star_median": float(np.median(ls)),
            "lambda_star_iqr": float(np.percentile(ls, 75) - np.percentile(ls, 25)),
            "g_mse_median": float(np.median(gs)),
            "g_mse_iqr": float(np.percentile(gs, 75) - np.percentile(gs, 25)),
        })
    return per, summary


def run_ablations(ctx: SweepContext, variants=None) -> list[SweepRow]:
    """Sweep rows for each ablation variant under predicted CSI (or the first mode)."""
    mode = "predicted" if "predicted" in ctx.cfg.modes else ctx.cfg.modes[0]
    rows = []
    for v in (ctx.cfg.ablations if variants is None else variants):
        rows += run_lambda_sweep(ctx, v, modes=(mode,))
    return rows
