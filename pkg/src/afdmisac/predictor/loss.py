"""Six-term composite training loss with analytic gradient."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .features import Normalizer, split_features

HUBER_DELTA = 1.0
COMPONENTS = ("A", "theta", "tau", "nu", "uc", "cnmse")


@dataclass(frozen=True)
class LossWeights:
    w_A: float = 1.0
    w_theta: float = 1.0
    w_tau: float = 1.0
    w_nu: float = 1.0
    w_uc: float = 0.1
    w_c: float = 1.0

    def __post_init__(self):
        vals = list(asdict(self).values())
        if any(v < 0 for v in vals) or not any(v > 0 for v in vals):
            raise ValueError("loss weights must be non-negative with at least one positive")

    def as_tuple(self):
        return (self.w_A, self.w_theta, self.w_tau, self.w_nu, self.w_uc, self.w_c)


def _huber(e, delta=HUBER_DELTA):
    ae = np.abs(e)
    return np.where(ae <= delta, 0.5 * e * e, delta * (ae - 0.5 * delta))


def composite_loss(pred, target, amps, lw: LossWeights, norm: Normalizer, grad: bool = True):
    """Return ``(total, components, d total / d pred)``.

    ``pred`` and ``target`` are ``(..., 5K)`` feature arrays, ``amps`` the
    ``(..., K)`` target amplitudes used to weight the phase term (normalised
    to mean one; uniform if they are all zero).  Every component is a mean
    over all leading positions and slots.
    """
    pred = np.asarray(pred, float)
    target = np.asarray(target, float)
    if pred.shape != target.shape:
        raise ValueError(f"pred {pred.shape} and target {target.shape} differ")
    K = norm.K
    pa, ps, pc, pt, pv = split_features(pred, K)
    ta, ts, tc, tt, tv = split_features(target, K)
    amps = np.broadcast_to(np.asarray(amps, float), ta.shape)
    n = ta.size

    mA = amps.mean()
    w = amps / mA if mA > 0 else np.ones_like(amps)

    ea, es, ec, et, ev = pa - ta, ps - ts, pc - tc, pt - tt, pv - tv
    u = ps * ps + pc * pc - 1.0

    sd_a = norm.sd_a
    Ep = np.exp(pa * sd_a + norm.mu_a)
    Et = np.exp(ta * sd_a + norm.mu_a)
    h_hat = Ep * (pc + 1j * ps)
    h_tgt = Et * (tc + 1j * ts)
    err = h_hat - h_tgt
    denom = max(float(np.mean(np.abs(h_tgt) ** 2)), 1e-300)

    comps = {
        "A": float(np.mean(ea * ea)),
        "theta": float(np.mean(w * (es * es + ec * ec)) / 2.0),
        "tau": float(np.mean(_huber(et))),
        "nu": float(np.mean(_huber(ev))),
        "uc": float(np.mean(u * u)),
        "cnmse": float(np.mean(np.abs(err) ** 2) / denom),
    }
    ws = dict(zip(COMPONENTS, lw.as_tuple()))
    total = sum(ws[k] * comps[k] for k in COMPONENTS)
    if not grad:
        return total, comps, None

    cn = ws["cnmse"] / (n * denom)
    g_a = ws["A"] * 2.0 * ea / n + cn * 2.0 * np.real(np.conj(err) * h_hat) * sd_a
    g_s = ws["theta"] * w * es / n + ws["uc"] * 4.0 * u * ps / n + cn * 2.0 * Ep * err.imag
    g_c = ws["theta"] * w * ec / n + ws["uc"] * 4.0 * u * pc / n + cn * 2.0 * Ep * err.real
    g_t = ws["tau"] * np.clip(et, -HUBER_DELTA, HUBER_DELTA) / n
    g_v = ws["nu"] * np.clip(ev, -HUBER_DELTA, HUBER_DELTA) / n
    g = np.concatenate([g_a, g_s, g_c, g_t, g_v], axis=-1)
    return total, comps, g
