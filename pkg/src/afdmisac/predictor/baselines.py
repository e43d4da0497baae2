"""Persistence and linear-extrapolation baselines on tracked path parameters."""

from __future__ import annotations

import numpy as np

from ..channel import wrap_phase
from .features import DecodedPaths

KINDS = ("persistence", "linear_extrapolation")


def baseline_predict(kind: str, A, theta, tau, nu, A_min: float = 1e-4) -> DecodedPaths:
    """Predict frame ``t`` from history arrays of shape ``(n, K)`` ending at ``t - 1``.

    ``persistence`` repeats the last frame.  ``linear_extrapolation`` extends
    the last step of the log-amplitude, delay, Doppler and unwrapped phase;
    slots that were empty (``A <= A_min``) in either of the last two frames
    fall back to persistence, since a birth would otherwise be extrapolated
    from a placeholder.
    Standardisation is affine, so extrapolating raw delay/Doppler is the same
    as extrapolating their standardised features.
    """
    A, theta, tau, nu = (np.atleast_2d(np.asarray(v, float)) for v in (A, theta, tau, nu))
    n = A.shape[0]
    if kind == "persistence":
        if n < 1:
            raise ValueError("persistence needs at least one history frame")
        return DecodedPaths(A[-1].copy(), theta[-1].copy(), tau[-1].copy(), nu[-1].copy())
    if kind == "linear_extrapolation":
        if n < 2:
            raise ValueError("linear extrapolation needs at least two history frames")
        a = np.log(np.maximum(A[-2:], A_min))
        th = np.unwrap(theta[-2:], axis=0)
        live = np.all(A[-2:] > A_min, axis=0)
        return DecodedPaths(
            A=np.where(live, np.exp(2 * a[1] - a[0]), A[-1]),
            theta=np.where(live, wrap_phase(2 * th[1] - th[0]), theta[-1]),
            tau=np.where(live, 2 * tau[-1] - tau[-2], tau[-1]),
            nu=np.where(live, 2 * nu[-1] - nu[-2], nu[-1]),
        )
    raise ValueError(f"unknown baseline kind {kind!r}; expected one of {KINDS}")
