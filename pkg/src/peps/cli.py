"""Command-line entry point: ``peps train|eval|spectra|lissajous|sweep``.

Every command prints comma-separated tables on stdout and writes its data
files, plus a figure, into ``--out``.  Exit codes: 0 success, 2 invalid
configuration, 3 numeric fault during training, 4 I/O or format error.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
import time
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np
import torch

from . import plotting
from .config import (
    ExperimentConfig, build_model, config_from_dict, default_output_dim, load_config, summarize,
)
from .errors import ConfigurationError, FormatError, InputError, NumericFaultError
from .experiment import ImageTask, make_task, resolve_signal
from .metrics import psd_slope, radial_psd
from .model import ModelCheckpoint, load_checkpoint, save_checkpoint, train
from .projection import lissajous_curve, lissajous_distinct, lissajous_gap, save_curve
from .signals import SdfVolume, TextureSet, load_image, save_image, save_texture_set, save_volume

log = logging.getLogger("peps")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
CHECKPOINT_NAME = "checkpoint.peps"


def _fmt(v) -> str:
    if isinstance(v, np.generic):
        v = v.item()
    if isinstance(v, float):
        return "inf" if math.isinf(v) else repr(v)
    return str(v)


def csv_table(rows: list[dict], columns: list[str] | None = None) -> str:
    columns = columns or list(rows[0])
    lines = [",".join(columns)] + [",".join(_fmt(r.get(c, "")) for c in columns) for r in rows]
    return "\n".join(lines) + "\n"


def _emit(text: str, path: Path | None = None) -> None:
    sys.stdout.write(text)
    if path is not None:
        path.write_text(text)


def _out_dir(args, cfg: ExperimentConfig | None = None) -> Path:
    out = Path(args.out or (cfg.out if cfg else "runs/out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _signal_base(cfg: ExperimentConfig) -> Path | None:
    src = Path(cfg.source)
    return src.parent if src.exists() else None


def _resolved(cfg: ExperimentConfig, task) -> ExperimentConfig:
    """Pin the signal-dependent fields so a checkpoint rebuilds the same model."""
    enc, mlp = cfg.encoder, cfg.mlp
    if isinstance(task, ImageTask):
        if mlp.output_dim not in (None, task.channels):
            raise ConfigurationError(f"config expects {mlp.output_dim} output channels, signal has {task.channels}")
        mlp = replace(mlp, output_dim=task.channels)
        if enc.image_size is None:
            enc = replace(enc, image_size=max(task.height, task.width))
    else:
        mlp = replace(mlp, output_dim=1)
    return replace(cfg, encoder=enc, mlp=mlp, eval_resolution=getattr(task, "resolution", cfg.eval_resolution))


def _write_outputs(out: Path, task, model, metrics: dict) -> None:
    if isinstance(task, ImageTask):
        pred = task.reconstruct(model)
        if isinstance(task.signal, TextureSet):
            layers = {n: pred[..., 3 * i:3 * i + 3] for i, n in enumerate(task.signal.names)}
            save_texture_set(out / "reconstruction", TextureSet(layers))
        else:
            save_image(out / "reconstruction.png", pred, bits=16)
        plotting.plot_reconstruction(pred, task.signal.values, out / "reconstruction_compare.png")
    else:
        pred = task.reconstruct(model)
        save_volume(out / "reconstruction.sdfv", SdfVolume(pred))
        plotting.plot_sdf_slice(pred, task.ground_truth(), out / "reconstruction_slice.png")
    _emit(csv_table([metrics]), out / "metrics.csv")


def _summary(cfg: ExperimentConfig, model) -> str:
    s = summarize(model)
    return (f"# encoder={cfg.encoder.kind}{'/' + cfg.encoder.inner if cfg.encoder.inner else ''} "
            f"mlp_input_dim={s.mlp_input_dim} encoder_params={s.encoder_params} "
            f"mlp_params={s.mlp_params} total_params={s.total}\n")


def run_training(cfg: ExperimentConfig, out: Path | None = None, quiet: bool = False):
    """Train one config; returns (metrics, model, task, resolved config)."""
    signal = resolve_signal(cfg.signal, _signal_base(cfg))
    task = make_task(cfg.task, signal, cfg.eval_resolution)
    cfg = _resolved(cfg, task)
    model = build_model(cfg)
    if not quiet:
        sys.stderr.write(_summary(cfg, model))
    t0 = time.perf_counter()
    metrics, history = train(model, task, cfg.train)
    elapsed = time.perf_counter() - t0
    if out is not None:
        save_checkpoint(out / CHECKPOINT_NAME, ModelCheckpoint.from_model(model, cfg.to_dict()))
        (out / "log.csv").write_text(history.to_csv())
        (out / "config.cfg").write_text(cfg.to_text())
        plotting.plot_training(history.rows, task.metric_name, out / "training.png")
    log.info("trained %d steps in %.1fs", cfg.train.steps, elapsed)
    return metrics, model, task, cfg


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if args.param_count_only:
        output_dim = default_output_dim(cfg)
        if output_dim is None:
            task = make_task(cfg.task, resolve_signal(cfg.signal, _signal_base(cfg)), cfg.eval_resolution)
            output_dim = task.channels
        model = build_model(cfg, output_dim)
        s = summarize(model)
        _emit(csv_table([{"mlp_input_dim": s.mlp_input_dim, "encoder_params": s.encoder_params,
                          "mlp_params": s.mlp_params, "total_params": s.total}]))
        return EXIT_OK
    out = _out_dir(args, cfg)
    metrics, model, task, cfg = run_training(cfg, out)
    _write_outputs(out, task, model, metrics)
    return EXIT_OK


def cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    cfg = config_from_dict(ckpt.config)
    spec = args.signal or cfg.signal
    task = make_task(cfg.task, resolve_signal(spec), cfg.eval_resolution)
    model = build_model(cfg, cfg.mlp.output_dim)
    task.check_model(model)
    ckpt.load_into(model)
    out = _out_dir(args, None if args.out else cfg)
    _write_outputs(out, task, model, task.evaluate(model))
    return EXIT_OK


def cmd_spectra(args) -> int:
    img = load_image(args.image)
    spectrum = radial_psd(img.values)
    fit = tuple(args.fit_range) if args.fit_range else None
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        alpha = psd_slope(spectrum, fit)
    for w in caught:
        sys.stderr.write(f"warning: {w.message}\n")
    spectrum.fitted_alpha = alpha
    out = _out_dir(args)
    spectrum.save(out / "spectrum.txt")
    plotting.plot_spectrum(spectrum, alpha, out / "spectrum.png", fit)
    _emit(csv_table([{"image": args.image, "alpha": "undefined" if math.isnan(alpha) else alpha,
                      "total_power": spectrum.total_power}]))
    return EXIT_OK


def cmd_lissajous(args) -> int:
    p = np.array([args.x, args.y])
    if not np.all(np.isfinite(p)):
        raise InputError("lissajous point must be finite")
    curve = lissajous_curve(p, 0.0, args.phi_max, args.samples)
    out = _out_dir(args)
    save_curve(out / "lissajous.txt", curve)
    curves = {f"({args.x:g}, {args.y:g})": curve}
    row = {"x": args.x, "y": args.y, "phi_max": args.phi_max, "samples": args.samples}
    if args.compare:
        q = np.array(args.compare)
        other = lissajous_curve(q, 0.0, args.phi_max, args.samples)
        save_curve(out / "lissajous_compare.txt", other)
        curves[f"({q[0]:g}, {q[1]:g})"] = other
        gap = lissajous_gap(p, q, args.phi_max, args.samples)
        same = bool(np.array_equal(p, q))
        row.update(x2=q[0], y2=q[1], gap=gap,
                   distinct=not same and lissajous_distinct(p, q, args.phi_max, args.samples))
    plotting.plot_lissajous(curves, out / "lissajous.png")
    _emit(csv_table([row]))
    return EXIT_OK


METHODS = ("config", "grid", "peps", "pink")


def _variant(cfg: ExperimentConfig, method: str, resolution: int, feat_dim: int) -> ExperimentConfig:
    enc = replace(cfg.encoder, resolution=(resolution,), feat_dim=feat_dim)
    agg = cfg.aggregator
    if method != "config":
        grid = enc.inner if enc.kind == "peps" else enc.kind
        if method == "grid":
            enc = replace(enc, kind=grid, inner=None)
        else:
            enc = replace(enc, kind="peps", inner=grid)
            agg = replace(agg, kind="concat" if method == "peps" else "pink")
    return replace(cfg, encoder=enc, aggregator=agg)


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    out = _out_dir(args, cfg)
    rows = []
    metric_name = None
    for method in args.methods:
        for res in args.resolutions:
            for k in args.feat_dims:
                variant = _variant(cfg, method, res, k)
                metrics, model, task, _ = run_training(variant, None, quiet=True)
                metric_name = task.metric_name
                s = summarize(model)
                rows.append({"method": method, "resolution": res, "feat_dim": k, "params": s.total,
                             "mlp_input_dim": s.mlp_input_dim, metric_name: metrics[metric_name]})
                sys.stderr.write(f"# {method} r={res} k={k}: {metric_name}={metrics[metric_name]:.3f}\n")
    _emit(csv_table(rows), out / "sweep.csv")
    plotting.plot_sweep(rows, metric_name, out / "sweep.png")
    return EXIT_OK


def _ints(s: str) -> list[int]:
    try:
        return [int(v) for v in s.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {s!r}") from None


def _methods(s: str) -> list[str]:
    ms = [m.strip() for m in s.split(",") if m.strip()]
    bad = [m for m in ms if m not in METHODS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown method(s) {bad}; choose from {', '.join(METHODS)}")
    return ms


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="peps", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one experiment config")
    p.add_argument("--config", required=True, help="config file or preset name")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--param-count-only", action="store_true", help="print parameter totals and exit")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a signal")
    p.add_argument("checkpoint")
    p.add_argument("signal", nargs="?", help="defaults to the signal named in the checkpoint")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("spectra", help="radial power spectrum and fitted 1/f^alpha slope")
    p.add_argument("image")
    p.add_argument("--fit-range", type=float, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--out")
    p.set_defaults(func=cmd_spectra)

    p = sub.add_parser("lissajous", help="sample the curve traced by a point's sine encoding")
    p.add_argument("x", type=float)
    p.add_argument("y", type=float)
    p.add_argument("--phi-max", type=float, default=16 * math.pi)
    p.add_argument("--samples", type=int, default=4096)
    p.add_argument("--compare", type=float, nargs=2, metavar=("X2", "Y2"))
    p.add_argument("--out")
    p.set_defaults(func=cmd_lissajous)

    p = sub.add_parser("sweep", help="train a grid of resolutions and feature sizes")
    p.add_argument("--config", required=True)
    p.add_argument("--resolutions", type=_ints, required=True)
    p.add_argument("--feat-dims", type=_ints, required=True)
    p.add_argument("--methods", type=_methods, default=["config"],
                   help="comma list of config, grid, peps, pink")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    threads = os.environ.get("PEPS_THREADS")
    if threads:
        try:
            torch.set_num_threads(max(1, int(threads)))
        except ValueError:
            sys.stderr.write(f"error: PEPS_THREADS must be an integer, got {threads!r}\n")
            return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigurationError as exc:
        sys.stderr.write(f"configuration error: {exc}\n")
        return EXIT_CONFIG
    except NumericFaultError as exc:
        sys.stderr.write(f"numeric fault: {exc}\n")
        for key, value in exc.diagnostics.items():
            sys.stderr.write(f"  {key}: {value}\n")
        return EXIT_NUMERIC
    except (FormatError, InputError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
