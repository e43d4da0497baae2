"""Experiment configuration stored as a versioned INI file.

Example::

    [meta]
    schema_version = 1

    [grid]
    M = 16
    N = 16
    delta_tau = 1e-08
    delta_nu = 1000.0

    [passes]
    presets = channel1, channel2, channel3
    num_frames = 1500

    [sweep]
    snr_db = 5, 10, 15, 20
    lambdas = 0, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5

Every key has a default; see :class:`ExperimentConfig` for the full list.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, fields, replace
from pathlib import Path

from ..kernel import DDGrid, PowerConfig
from ..predictor import LossWeights, TrainConfig

SCHEMA_VERSION = 1
CSI_MODES = ("predicted", "outdated", "true-reference")
ABLATIONS = ("none", "SfConst", "SfRandom", "noNorm")

# key -> INI section; anything not listed lives in [run]
_SECTIONS = {
    "M": "grid", "N": "grid", "delta_tau": "grid", "delta_nu": "grid",
    "presets": "passes", "num_frames": "passes",
    "K": "stage1", "window": "stage1", "hidden": "stage1", "proj": "stage1", "layers": "stage1",
    "residual": "stage1", "batch_size": "stage1", "lr": "stage1", "weight_decay": "stage1",
    "max_epochs": "stage1", "patience": "stage1", "clip_norm": "stage1", "val_frac": "stage1",
    "test_frac": "stage1", "A_min": "stage1", "loss_weights": "stage1",
    "snr_db": "sweep", "lambdas": "sweep", "modes": "sweep", "lag": "sweep",
    "eval_frames": "sweep", "mc_frames": "sweep", "k_prime": "sweep", "order": "sweep",
    "symbol_energy": "sweep",
    "ablations": "ablation", "random_pattern_seed": "ablation",
}


@dataclass(frozen=True)
class ExperimentConfig:
    # grid
    M: int = 16
    N: int = 16
    delta_tau: float = 1e-8
    delta_nu: float = 1e3
    # passes
    presets: tuple[str, ...] = ("channel1", "channel2", "channel3")
    num_frames: int = 1500
    # stage I
    K: int = 4
    window: int = 64
    hidden: int = 32
    proj: int = 16
    layers: int = 2
    residual: bool = True
    batch_size: int = 64
    lr: float = 1e-3
    weight_decay: float = 1e-4
    max_epochs: int = 40
    patience: int = 20
    clip_norm: float = 1.0
    val_frac: float = 0.15
    test_frac: float = 0.15
    A_min: float = 1e-4
    loss_weights: tuple[float, ...] = (1.0, 1.0, 1.0, 1.0, 0.1, 1.0)
    # stage II
    snr_db: tuple[float, ...] = (5.0, 10.0, 15.0, 20.0)
    lambdas: tuple[float, ...] = (0.0, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5)
    modes: tuple[str, ...] = ("predicted", "outdated")
    lag: int = 1
    eval_frames: int = 200
    mc_frames: int = 200
    k_prime: int = 3
    order: int = 4
    symbol_energy: float = 1.0
    # ablations
    ablations: tuple[str, ...] = ("SfConst", "SfRandom", "noNorm")
    random_pattern_seed: int = 7
    # run
    seed: int = 0
    threads: int = 1
    out_dir: str = "out"

    def __post_init__(self):
        if not self.snr_db:
            raise ValueError("snr_db must not be empty")
        if 0.0 not in self.lambdas:
            raise ValueError("lambdas must contain 0 (the MMSE reference)")
        if any(l < 0 for l in self.lambdas):
            raise ValueError("lambdas must be non-negative")
        bad = [m for m in self.modes if m not in CSI_MODES]
        if bad or not self.modes:
            raise ValueError(f"unknown CSI modes {bad}; choose from {CSI_MODES}")
        bad = [a for a in self.ablations if a not in ABLATIONS]
        if bad:
            raise ValueError(f"unknown ablations {bad}; choose from {ABLATIONS}")
        if self.lag < 1 or self.eval_frames < 1 or self.mc_frames < 1 or self.threads < 1:
            raise ValueError("lag, eval_frames, mc_frames and threads must be >= 1")
        if len(self.loss_weights) != 6:
            raise ValueError("loss_weights needs six values")

    @property
    def grid(self) -> DDGrid:
        return DDGrid(self.M, self.N, self.delta_tau, self.delta_nu)

    def power(self, snr_db: float) -> PowerConfig:
        return PowerConfig.from_snr_db(snr_db, self.symbol_energy)

    def train_config(self) -> TrainConfig:
        return TrainConfig(window=self.window, batch_size=self.batch_size, lr=self.lr,
                           weight_decay=self.weight_decay, max_epochs=self.max_epochs,
                           schedule_epochs=self.max_epochs, clip_norm=self.clip_norm,
                           patience=self.patience, val_frac=self.val_frac, test_frac=self.test_frac,
                           guard=self.window, A_min=self.A_min, seed=self.seed)

    def loss_weight_config(self) -> LossWeights:
        return LossWeights(*self.loss_weights)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


def _parse(value: str, default):
    if isinstance(default, bool):
        v = value.strip().lower()
        if v not in ("true", "false", "1", "0", "yes", "no"):
            raise ValueError(f"not a boolean: {value!r}")
        return v in ("true", "1", "yes")
    if isinstance(default, tuple):
        items = [s.strip() for s in value.split(",") if s.strip()]
        if default and isinstance(default[0], str):
            return tuple(items)
        return tuple(float(s) for s in items)
    return type(default)(value)


def _format(value) -> str:
    if isinstance(value, tuple):
        return ", ".join(str(v) for v in value)
    return str(value).lower() if isinstance(value, bool) else str(value)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    cp = configparser.ConfigParser()
    cp.optionxform = str                  # keep M / N / K case
    if not cp.read(path):
        raise FileNotFoundError(f"config file not found: {path}")
    version = cp.getint("meta", "schema_version", fallback=SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ValueError(f"{path}: schema_version {version} is not supported (expected {SCHEMA_VERSION})")
    defaults = ExperimentConfig()
    known = {f.name for f in fields(ExperimentConfig)}
    kw = {}
    for section in cp.sections():
        if section == "meta":
            continue
        for key, raw in cp.items(section):
            if key not in known:
                raise ValueError(f"{path}: unknown key {key!r} in [{section}]")
            try:
                kw[key] = _parse(raw, getattr(defaults, key))
            except ValueError as exc:
                raise ValueError(f"{path}: bad value for {key}: {exc}") from None
    return ExperimentConfig(**kw)


def save_config(cfg: ExperimentConfig, path) -> None:
    cp = configparser.ConfigParser()
    cp.optionxform = str
    cp["meta"] = {"schema_version": str(SCHEMA_VERSION)}
    for f in fields(ExperimentConfig):
        sec = _SECTIONS.get(f.name, "run")
        if sec not in cp:
            cp[sec] = {}
        cp[sec][f.name] = _format(getattr(cfg, f.name))
    with open(path, "w") as fh:
        cp.write(fh)
