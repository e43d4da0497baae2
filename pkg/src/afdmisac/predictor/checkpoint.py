"""Versioned ``.npz`` checkpoints: JSON metadata plus named weight arrays."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .features import Normalizer
from .gru import GruModel

CHECKPOINT_VERSION = 1


def save_checkpoint(path, model: GruModel, norm: Normalizer, extra: dict | None = None) -> None:
    meta = {
        "version": CHECKPOINT_VERSION,
        "hyper": {"n_features": model.n_features, "hidden": model.hidden, "proj": model.proj,
                  "layers": model.layers, "horizon": model.horizon, "residual": model.residual},
        "normalizer": norm.to_dict(),
        "shapes": {k: list(v.shape) for k, v in model.params.items()},
        "extra": extra or {},
    }
    arrays = {f"w/{k}": v for k, v in model.params.items()}
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.array(json.dumps(meta, sort_keys=True)), **arrays)


def load_checkpoint(path) -> tuple[GruModel, Normalizer, dict]:
    path = Path(path)
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {meta.get('version')}")
        params = {k[2:]: z[k].astype(float) for k in z.files if k.startswith("w/")}
    model = GruModel(**meta["hyper"], params=params)
    expected = GruModel.init(**meta["hyper"]).shapes()
    for name, shape in expected.items():
        got = params.get(name)
        if got is None or got.shape != shape or list(shape) != meta["shapes"].get(name):
            raise ValueError(f"{path}: weight {name!r} has shape "
                             f"{None if got is None else got.shape}, expected {shape}")
    if set(params) != set(expected):
        raise ValueError(f"{path}: unexpected weights {sorted(set(params) - set(expected))}")
    if not all(np.all(np.isfinite(v)) for v in params.values()):
        raise ValueError(f"{path}: non-finite weights")
    return model, Normalizer.from_dict(meta["normalizer"]), meta.get("extra", {})
