"""CSV tables and SVG figures.

CSV columns follow the ``*_COLUMNS`` tuples of :mod:`.pipeline`; floats are
written with ``repr`` so identical runs give identical bytes.  Figures are
rendered with matplotlib's SVG backend with the date stamp removed and a fixed
hash salt, which keeps them reproducible as well.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import matplotlib
from matplotlib.figure import Figure

from .pipeline import (LSTAR_COLUMNS, STAGE1_COLUMNS, SUMMARY_COLUMNS, SWEEP_COLUMNS, SweepRow,
                       select_lambda_star)

CSV_SCHEMA_VERSION = 1
DB_FLOOR = -40.0
matplotlib.rcParams["svg.hashsalt"] = "afdmisac"


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_csv(path, columns: Sequence[str], rows: Iterable[dict]) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\n")
            w.writeheader()
            for r in rows:
                w.writerow({k: _fmt(r[k]) for k in columns})
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc
    return path


def write_schema(out_dir) -> Path:
    """Column lists of every CSV the harness emits."""
    path = Path(out_dir) / "schema.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {"version": CSV_SCHEMA_VERSION, "sweep": SWEEP_COLUMNS, "lambda_star": LSTAR_COLUMNS,
           "summary": SUMMARY_COLUMNS, "stage1": STAGE1_COLUMNS}
    path.write_text(json.dumps(doc, indent=1) + "\n")
    return path


def read_sweep(path) -> list[SweepRow]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != SWEEP_COLUMNS:
            raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
        return [SweepRow(r["experiment"], r["pass"], float(r["snr_db"]), float(r["lambda"]),
                         r["csi_mode"], float(r["mse"]), float(r["ser"]), float(r["crlb_ratio"]),
                         float(r["cnmse_mean"]), int(r["seed"])) for r in reader]


# ----------------------------------------------------------------------------
# figures
# ----------------------------------------------------------------------------

def _save(fig: Figure, path: Path) -> Path:
    try:
        fig.savefig(path, format="svg", metadata={"Date": None})
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc
    return path


def heatmap_db(values: np.ndarray, ref: float | None = None, floor: float = DB_FLOOR) -> np.ndarray:
    """``20 log10(|x| / ref)`` clipped below at ``floor`` dB; ``ref`` defaults to ``max |x|``."""
    mag = np.abs(np.asarray(values))
    ref = mag.max() if ref is None else ref
    if ref == 0:
        return np.full(mag.shape, floor)
    with np.errstate(divide="ignore"):
        db = 20 * np.log10(mag / ref)
    return np.maximum(db, floor)


def plot_kernels(panels: dict[str, np.ndarray], path, title: str = "") -> Path:
    """Side-by-side dB heatmaps on a shared scale (largest entry of all panels = 0 dB).

    The Doppler axis is shifted so zero Doppler sits in the middle.
    """
    ref = max(float(np.abs(v).max()) for v in panels.values())
    fig = Figure(figsize=(3.2 * len(panels) + 0.8, 3.0))
    axes = fig.subplots(1, len(panels), squeeze=False)[0]
    im = None
    for ax, (name, v) in zip(axes, panels.items()):
        im = ax.imshow(np.fft.fftshift(heatmap_db(v, ref), axes=1), origin="lower", aspect="auto",
                       vmin=DB_FLOOR, vmax=0, cmap="viridis")
        ax.set_title(name, fontsize=9)
        ax.set_xlabel("Doppler bin (shifted)")
        ax.set_ylabel("delay bin")
    fig.colorbar(im, ax=list(axes), label="dB")
    if title:
        fig.suptitle(title, fontsize=10)
    return _save(fig, Path(path))


def plot_sweep(rows: Sequence[SweepRow], out_dir, prefix: str = "sweep") -> list[Path]:
    """One figure per (experiment, pass, SNR): MSE, SER and CRLB ratio versus lambda per CSI mode."""
    out_dir = Path(out_dir)
    groups: dict[tuple[str, str, float], list[SweepRow]] = {}
    for r in rows:
        groups.setdefault((r.experiment, r.pass_name, r.snr_db), []).append(r)
    paths = []
    for (exp, pname, snr), rs in sorted(groups.items()):
        fig = Figure(figsize=(10, 3))
        axes = fig.subplots(1, 3)
        for mode in sorted({r.csi_mode for r in rs}):
            sel = sorted((r for r in rs if r.csi_mode == mode), key=lambda r: r.lam)
            lam = [r.lam for r in sel]
            style = "-o" if mode == "predicted" else "--s"
            axes[0].plot(lam, [r.mse for r in sel], style, label=mode, ms=3)
            axes[1].plot(lam, [r.ser for r in sel], style, label=mode, ms=3)
            axes[2].plot(lam, [r.crlb_ratio for r in sel], style, label=mode, ms=3)
        for ax, name in zip(axes, ("symbol MSE", "SER", "CRLB(lambda) / CRLB(0)")):
            ax.set_xscale("symlog", linthresh=0.01)
            ax.set_xlabel("lambda")
            ax.set_title(name, fontsize=9)
        axes[2].set_yscale("log")
        axes[0].legend(fontsize=7)
        label = "baseline" if exp == "none" else exp
        fig.suptitle(f"{prefix} ({label}): {pname}, SNR {snr:g} dB", fontsize=10)
        fig.tight_layout()
        paths.append(_save(fig, out_dir / f"{prefix}_{label}_{pname}_snr{snr:g}dB.svg"))
    return paths


def emit_outputs(rows: Sequence[SweepRow], out_dir, experiment: str = "sweep",
                 plots: bool = True) -> dict[str, Path]:
    """Sweep CSV, lambda* tables and figures; an empty row set gives header-only CSVs."""
    out_dir = Path(out_dir)
    files = {"sweep": write_csv(out_dir / f"{experiment}.csv", SWEEP_COLUMNS, (r.as_csv() for r in rows))}
    per, summary = select_lambda_star(list(rows)) if rows else ([], [])
    files["lambda_star"] = write_csv(out_dir / f"{experiment}_lambda_star.csv", LSTAR_COLUMNS, per)
    files["summary"] = write_csv(out_dir / f"{experiment}_summary.csv", SUMMARY_COLUMNS, summary)
    write_schema(out_dir)
    if plots and rows:
        for i, p in enumerate(plot_sweep(rows, out_dir, experiment)):
            files[f"plot{i}"] = p
    return files
