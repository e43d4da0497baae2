"""Command-line entry point.

Subcommands::

    afdmisac gen-pass   export the configured pass traces as CSV
    afdmisac train      Stage I: train the GRU, write checkpoint, metrics and heatmaps
    afdmisac sweep      Stage II: lambda sweep under every configured CSI mode
    afdmisac ablate     SfConst / SfRandom / noNorm variants next to the baseline
    afdmisac plot       re-render figures from existing CSVs and kernel dumps

Global flags ``--config``, ``--seed``, ``--out-dir`` and ``--threads`` override
the corresponding config keys.  Everything is written below the output
directory; ``sweep`` and ``ablate`` read ``checkpoint.npz`` from there unless
``--checkpoint`` says otherwise.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from ..channel import export_pass, snapshot_kernel
from ..kernel import dump_kernel, load_kernel
from ..predictor import load_checkpoint, save_checkpoint
from ..predictor.training import LOG_COLUMNS
from .config import ExperimentConfig, load_config, save_config
from .outputs import emit_outputs, plot_kernels, plot_sweep, read_sweep, write_csv
from .pipeline import (STAGE1_COLUMNS, _kernel, build_passes, predict_pass, prepare_sweep,
                       run_ablations, run_lambda_sweep, run_stage1, test_targets)

log = logging.getLogger("afdmisac")


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    return cfg.with_overrides(seed=args.seed, out_dir=args.out_dir, threads=args.threads)


def _out(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_config(cfg, out / "config.ini")
    return out


def _checkpoint(args, out: Path):
    path = Path(args.checkpoint) if args.checkpoint else out / "checkpoint.npz"
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path} (run 'train' first)")
    model, norm, _ = load_checkpoint(path)
    return model, norm


def cmd_gen_pass(args, cfg):
    out = _out(cfg) / "passes"
    out.mkdir(exist_ok=True)
    for b in build_passes(cfg):
        export_pass(b.snaps, out / f"{b.name}.csv")
        log.info("wrote %s", out / f"{b.name}.csv")


def cmd_train(args, cfg):
    out = _out(cfg)
    passes = build_passes(cfg, args.pass_dir)
    res = run_stage1(cfg, passes)
    save_checkpoint(out / "checkpoint.npz", res.model, res.norm,
                    {"best_epoch": res.training.best_epoch, "seed": cfg.seed})
    write_csv(out / "train_log.csv", LOG_COLUMNS, res.training.log_rows)
    write_csv(out / "stage1_metrics.csv", STAGE1_COLUMNS, res.metrics)
    kdir = out / "kernels"
    kdir.mkdir(exist_ok=True)
    grid = cfg.grid
    for b in passes:
        t = int(test_targets(cfg, b)[0])
        pred = predict_pass(res.model, res.norm, b, np.array([t]), cfg.window)
        H = snapshot_kernel(b.snaps[t], grid)
        Hhat = _kernel(pred, 0, grid)
        dump_kernel(H, kdir / f"{b.name}_t{t}_true.txt")
        dump_kernel(Hhat, kdir / f"{b.name}_t{t}_pred.txt")
        _heatmap(kdir / f"{b.name}_t{t}", out, b.name, t)
    for r in res.metrics:
        log.info("%s %-20s CNMSE mean %.2f%%", r["pass"], r["predictor"], r["cnmse_mean"])


def _heatmap(stem: Path, out: Path, name: str, t: int):
    H = load_kernel(f"{stem}_true.txt")
    Hhat = load_kernel(f"{stem}_pred.txt")
    panels = {"|H|": H.values, "|H_hat|": Hhat.values, "|H - H_hat|": H.values - Hhat.values}
    plot_kernels(panels, out / f"stage1_{name}_t{t}.svg", f"{name}, frame {t}")


def cmd_sweep(args, cfg):
    out = _out(cfg)
    model, norm = _checkpoint(args, out) if "predicted" in cfg.modes else (None, None)
    ctx = prepare_sweep(cfg, build_passes(cfg, args.pass_dir), model, norm)
    rows = run_lambda_sweep(ctx)
    emit_outputs(rows, out, "sweep", plots=not args.no_plots)
    log.info("wrote %d sweep rows to %s", len(rows), out / "sweep.csv")


def cmd_ablate(args, cfg):
    out = _out(cfg)
    mode = "predicted" if "predicted" in cfg.modes else cfg.modes[0]
    model, norm = _checkpoint(args, out) if mode == "predicted" else (None, None)
    ctx = prepare_sweep(cfg.with_overrides(modes=(mode,)), build_passes(cfg, args.pass_dir), model, norm)
    rows = run_lambda_sweep(ctx) + run_ablations(ctx)
    emit_outputs(rows, out, "ablation", plots=not args.no_plots)
    log.info("wrote %d ablation rows to %s", len(rows), out / "ablation.csv")


def cmd_plot(args, cfg):
    out = Path(cfg.out_dir)
    n = 0
    for exp in ("sweep", "ablation"):
        path = out / f"{exp}.csv"
        if path.exists():
            n += len(plot_sweep(read_sweep(path), out, exp))
    kdir = out / "kernels"
    for f in sorted(kdir.glob("*_true.txt")) if kdir.is_dir() else []:
        stem = f.with_name(f.name[:-len("_true.txt")])
        name, _, t = stem.name.rpartition("_t")
        _heatmap(stem, out, name, int(t))
        n += 1
    if n == 0:
        raise FileNotFoundError(f"nothing to plot in {out}")
    log.info("rendered %d figures in %s", n, out)


COMMANDS = {"gen-pass": cmd_gen_pass, "train": cmd_train, "sweep": cmd_sweep,
            "ablate": cmd_ablate, "plot": cmd_plot}


_HELP = {"train": "Stage I training and evaluation", "sweep": "Stage II lambda sweep",
         "ablate": "ablation variants under predicted CSI"}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="afdmisac", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="INI config file (defaults are used when omitted)")
    p.add_argument("--seed", type=int, help="base seed")
    p.add_argument("--out-dir", help="output directory")
    p.add_argument("--threads", type=int, help="worker threads for the sweep")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("gen-pass", help="export pass traces to <out-dir>/passes")
    for name in ("train", "sweep", "ablate"):
        sp = sub.add_parser(name, help=_HELP[name])
        sp.add_argument("--pass-dir", help="import pass traces from this directory instead of generating")
        if name != "train":
            sp.add_argument("--checkpoint", help="Stage-I checkpoint (default <out-dir>/checkpoint.npz)")
            sp.add_argument("--no-plots", action="store_true", help="CSV output only")
    sub.add_parser("plot", help="re-render figures from CSVs and kernel dumps")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        COMMANDS[args.command](args, cfg)
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"afdmisac {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
