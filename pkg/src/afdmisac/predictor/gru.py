"""Multi-layer GRU with a projection and linear head, forward and BPTT in numpy.

Per layer and time step::

    z  = sigmoid(x W_z + h U_z + b_z)
    r  = sigmoid(x W_r + h U_r + b_r)
    hc = tanh(x W_h + (r * h) U_h + b_h)
    h' = (1 - z) * h + z * hc

The gate matrices are stored concatenated as ``W`` (in, 3d), ``U`` (d, 3d) and
``b`` (3d,) in the order ``z, r, h``.  The last hidden state of the top layer
goes through ``proj`` (d -> d') and ``head`` (d' -> H * 5K), both affine.
With ``residual`` set, the last input frame is added to every output step so
the network models the per-frame change; this keeps predictions sensible when
drifting parameters leave the range seen in training.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass
class GruModel:
    n_features: int
    hidden: int = 32
    proj: int = 16
    layers: int = 2
    horizon: int = 1
    residual: bool = False
    params: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def init(cls, n_features: int, hidden: int = 32, proj: int = 16, layers: int = 2,
             horizon: int = 1, residual: bool = False, seed: int = 0) -> "GruModel":
        rng = np.random.default_rng(seed)
        m = cls(n_features, hidden, proj, layers, horizon, residual)
        d = hidden
        for i in range(layers):
            fan = n_features if i == 0 else d
            k = 1.0 / np.sqrt(d)
            m.params[f"l{i}.W"] = rng.uniform(-k, k, (fan, 3 * d))
            m.params[f"l{i}.U"] = rng.uniform(-k, k, (d, 3 * d))
            m.params[f"l{i}.b"] = np.zeros(3 * d)
        m.params["proj.W"] = rng.uniform(-1 / np.sqrt(d), 1 / np.sqrt(d), (d, proj))
        m.params["proj.b"] = np.zeros(proj)
        m.params["head.W"] = rng.uniform(-1 / np.sqrt(proj), 1 / np.sqrt(proj), (proj, horizon * n_features))
        m.params["head.b"] = np.zeros(horizon * n_features)
        return m

    def shapes(self) -> dict[str, tuple[int, ...]]:
        return {k: v.shape for k, v in self.params.items()}

    def copy(self) -> "GruModel":
        return GruModel(self.n_features, self.hidden, self.proj, self.layers, self.horizon,
                        self.residual, {k: v.copy() for k, v in self.params.items()})

    def zeros_like(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.params.items()}


def gru_forward(model: GruModel, window: np.ndarray, return_cache: bool = False):
    """Map ``(L, F)`` or ``(B, L, F)`` windows to ``(H, F)`` / ``(B, H, F)``."""
    x = np.asarray(window, dtype=float)
    single = x.ndim == 2
    if single:
        x = x[None]
    if x.ndim != 3 or x.shape[-1] != model.n_features:
        raise ValueError(f"window must be (L, {model.n_features}) or (B, L, {model.n_features}), got {np.shape(window)}")
    B, L, _ = x.shape
    d = model.hidden
    p = model.params
    caches = []
    inp = x
    for i in range(model.layers):
        W, U, b = p[f"l{i}.W"], p[f"l{i}.U"], p[f"l{i}.b"]
        xw = inp @ W + b                      # (B, L, 3d), hoisted out of the loop
        h = np.zeros((B, d))
        hs = np.empty((B, L + 1, d))
        hs[:, 0] = h
        zs = np.empty((B, L, d))
        rs = np.empty((B, L, d))
        hcs = np.empty((B, L, d))
        Uzr, Uh = U[:, :2 * d], U[:, 2 * d:]
        for t in range(L):
            a = xw[:, t]
            zr = _sigmoid(a[:, :2 * d] + h @ Uzr)
            z, r = zr[:, :d], zr[:, d:]
            hc = np.tanh(a[:, 2 * d:] + (r * h) @ Uh)
            h = h + z * (hc - h)
            zs[:, t], rs[:, t], hcs[:, t] = z, r, hc
            hs[:, t + 1] = h
        caches.append((inp, hs, zs, rs, hcs))
        inp = hs[:, 1:]
    h_last = inp[:, -1]
    zp = h_last @ p["proj.W"] + p["proj.b"]
    out = zp @ p["head.W"] + p["head.b"]
    out = out.reshape(B, model.horizon, model.n_features)
    if model.residual:
        out = out + x[:, -1:, :]
    if single:
        out = out[0]
    if return_cache:
        return out, (caches, h_last, zp, single)
    return out


def gru_backward(model: GruModel, cache, d_out: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss w.r.t. every parameter given ``dL/d out``."""
    caches, h_last, zp, single = cache
    p = model.params
    d = model.hidden
    g = model.zeros_like()
    dy = np.asarray(d_out, float)
    if single:
        dy = dy[None]
    B = dy.shape[0]
    dy = dy.reshape(B, -1)
    g["head.W"] = zp.T @ dy
    g["head.b"] = dy.sum(0)
    dzp = dy @ p["head.W"].T
    g["proj.W"] = h_last.T @ dzp
    g["proj.b"] = dzp.sum(0)
    dh_top = dzp @ p["proj.W"].T

    d_layer_out = None        # (B, L, d) gradient flowing into the layer outputs
    for i in reversed(range(model.layers)):
        inp, hs, zs, rs, hcs = caches[i]
        W, U = p[f"l{i}.W"], p[f"l{i}.U"]
        Uzr, Uh = U[:, :2 * d], U[:, 2 * d:]
        L = zs.shape[1]
        da_all = np.empty((B, L, 3 * d))
        dU = np.zeros_like(U)
        dh = np.zeros((B, d))
        for t in reversed(range(L)):
            if d_layer_out is not None:
                dh = dh + d_layer_out[:, t]
            if t == L - 1 and i == model.layers - 1:
                dh = dh + dh_top
            h_prev = hs[:, t]
            z, r, hc = zs[:, t], rs[:, t], hcs[:, t]
            dz = dh * (hc - h_prev)
            dah = dh * z * (1.0 - hc * hc)
            drh = dah @ Uh.T
            dr = drh * h_prev
            daz = dz * z * (1.0 - z)
            dar = dr * r * (1.0 - r)
            dzr = np.concatenate([daz, dar], axis=1)
            dU[:, :2 * d] += h_prev.T @ dzr
            dU[:, 2 * d:] += (r * h_prev).T @ dah
            dh = dh * (1.0 - z) + drh * r + dzr @ Uzr.T
            da_all[:, t, :2 * d] = dzr
            da_all[:, t, 2 * d:] = dah
        g[f"l{i}.U"] = dU
        g[f"l{i}.W"] = np.einsum("blf,blg->fg", inp, da_all)
        g[f"l{i}.b"] = da_all.sum((0, 1))
        d_layer_out = da_all @ W.T
    return g
