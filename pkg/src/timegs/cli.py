"""Command-line entry point: ``timegs <subcommand> [options]``."""

from __future__ import annotations

import argparse
import contextlib
import csv
import dataclasses
import itertools
import json
import logging
import sys
import typing
from pathlib import Path

import numpy as np

from .basisbank import default_bank, save_bank
from .config import ModelConfig, load_config, preset, save_config
from .kernelgen import compose
from .model import TimeGS
from .rasterizer import splat
from .train import ABLATIONS, ablation_config, evaluate, fit, load_dataset, make_splits

log = logging.getLogger("timegs")

_FIELD_TYPES = typing.get_type_hints(ModelConfig)


def _parse_value(name: str, text: str):
    tp = _FIELD_TYPES[name]
    if name == "psi_set":
        return [int(t) for t in text.split(",") if t]
    if text.lower() in ("none", "null") and type(None) in typing.get_args(tp):
        return None
    base = next((a for a in typing.get_args(tp) if a is not type(None)), tp) if typing.get_args(tp) else tp
    return base(text)


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its keys")
    p.add_argument("--seed", type=int)
    p.add_argument("--seeds", help="comma-separated seeds; one run per seed")
    p.add_argument("--grid", action="append", default=[], metavar="KEY=V1,V2",
                   help="sweep a config key over listed values (repeatable)")
    p.add_argument("--horizon", type=int, dest="O", help="forecast horizon O")
    p.add_argument("--output-dir", default="runs/latest")
    g = p.add_argument_group("config overrides")
    for f in dataclasses.fields(ModelConfig):
        if f.name in ("seed", "O"):
            continue
        g.add_argument("--" + f.name.replace("_", "-"), dest=f.name, metavar=f.name.upper())


def _base_config(args) -> ModelConfig:
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = preset(args.dataset or "synthetic")
    updates = {}
    for f in dataclasses.fields(ModelConfig):
        val = getattr(args, f.name, None)
        if val is None or (f.name == "dataset" and not args.config):
            continue
        updates[f.name] = val if f.name in ("seed", "O") else _parse_value(f.name, val)
    return dataclasses.replace(cfg, **updates)


def expand_runs(args) -> list[tuple[str, ModelConfig]]:
    """Cartesian product of --grid sweeps and --seeds, each with a run name."""
    cfg = _base_config(args)
    axes = []
    for entry in args.grid:
        key, _, values = entry.partition("=")
        if key not in _FIELD_TYPES or not values:
            raise ValueError(f"bad --grid entry {entry!r}; expected KEY=v1,v2 with a config key")
        sep = ";" if key == "psi_set" else ","
        axes.append([(key, _parse_value(key, v)) for v in values.split(sep)])
    if args.seeds:
        axes.append([("seed", int(s)) for s in args.seeds.split(",")])
    runs = []
    for combo in itertools.product(*axes):
        name = "_".join(f"{k}={','.join(map(str, v)) if isinstance(v, list) else v}" for k, v in combo) or "run"
        runs.append((name, dataclasses.replace(cfg, **dict(combo)).validate()))
    return runs


def _num(v) -> str:
    return "%.17g" % v


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")


def _run(args, variant: str | None = None) -> int:
    out = Path(args.output_dir)
    runs = expand_runs(args)
    summary = []
    for name, cfg in runs:
        if variant is not None:
            cfg = ablation_config(cfg, variant)
        run_dir = out if len(runs) == 1 else out / name
        run_dir.mkdir(parents=True, exist_ok=True)
        splits = make_splits(load_dataset(cfg), cfg.I, cfg.O)
        model, report = fit(cfg, splits)
        save_config(cfg, run_dir / "config.json")
        np.savez(run_dir / "params.npz", **model.state_dict())
        rep = report.to_dict()
        if variant is not None:
            rep["variant"] = variant
        _write_json(run_dir / "report.json", rep)
        print(f"{run_dir}: test mse {report.test_mse:.4f} mae {report.test_mae:.4f} ({report.steps} steps, {report.wall_time:.1f}s)")
        summary.append({"run": name, "dir": str(run_dir), "variant": variant, "seed": cfg.seed,
                        "test_mse": report.test_mse, "test_mae": report.test_mae})
    if len(runs) > 1:
        _write_json(out / "summary.json", summary)
    return 0


def _load_run(run_dir: Path) -> tuple[ModelConfig, TimeGS]:
    cfg_path, par_path = run_dir / "config.json", run_dir / "params.npz"
    for p in (cfg_path, par_path):
        if not p.exists():
            raise FileNotFoundError(f"run directory is missing {p}")
    cfg = ModelConfig.from_dict(json.loads(cfg_path.read_text(encoding="utf-8")))
    with np.load(par_path) as data:
        state = {k: data[k] for k in data.files}
    ds = load_dataset(cfg)
    model = TimeGS(cfg, ds.C)
    model.load_state_dict(state)
    return cfg, model


def cmd_train(args) -> int:
    return _run(args)


def cmd_ablate(args) -> int:
    variants = list(ABLATIONS) if args.variant == "all" else [args.variant]
    for v in variants:
        if v not in ABLATIONS:
            raise ValueError(f"unknown ablation {v!r}; valid variants: {', '.join(ABLATIONS)}")
    base = args.output_dir
    for v in variants:
        args.output_dir = str(Path(base) / v) if len(variants) > 1 else base
        _run(args, v)
    return 0


def cmd_eval(args) -> int:
    run_dir = Path(args.run_dir)
    cfg, model = _load_run(run_dir)
    splits = make_splits(load_dataset(cfg), cfg.I, cfg.O)
    res = {}
    for name in args.splits.split(","):
        mse, mae = evaluate(model, *getattr(splits, name), args.batch_size or cfg.eval_batch_size)
        res[name] = {"mse": mse, "mae": mae}
        print(f"{name}: mse {mse:.4f} mae {mae:.4f}")
    _write_json(run_dir / "eval.json", res)
    return 0


def cmd_dump_bank(args) -> int:
    cfg = _base_config(args)
    bank = default_bank(cfg.M, cfg.r, cfg.h, cfg.w)
    path = Path(args.output)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_bank(bank, path)
    print(f"wrote {bank.M}x{bank.h}x{bank.w} bank to {path} (sha256 {bank.checksum()[:12]})")
    return 0


def cmd_dump_render(args) -> int:
    if args.run_dir:
        cfg, model = _load_run(Path(args.run_dir))
    else:
        cfg = _base_config(args).validate()
        model = None
    splits = make_splits(load_dataset(cfg), cfg.I, cfg.O)
    model = model if model is not None else TimeGS(cfg, splits.C)
    x = getattr(splits, args.split)[0][args.window : args.window + 1]
    xn, _ = model.normalize(x)
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "canvas.csv", "w", newline="") as fc, open(out / "anchors.csv", "w", newline="") as fa:
        wc, wa = csv.writer(fc), csv.writer(fa)
        wc.writerow(["channel", "branch", "component", "t", "value"])
        wa.writerow(["channel", "branch", "anchor", "row", "col", "component", "t", "value"])
        for k, br in enumerate(model.branches):
            canv = br(xn).values
            for c in range(model.C):
                for p in range(cfg.P):
                    wc.writerows([c, k, p, t, _num(v)] for t, v in enumerate(canv[c, p]))
            if br.decoder != "multibasis":
                continue
            field = br.head(br.encoder(br.encoder.prepare(xn)))
            for c in range(model.C):
                for g, pos in enumerate(br.layout.positions):
                    for p in range(cfg.P):
                        contrib = splat(compose(field, model.bank, g, p, b=c), pos, br.layout)
                        for t in np.nonzero(contrib)[0]:
                            wa.writerow([c, k, g, pos[0], pos[1], p, t, _num(contrib[t])])
    print(f"wrote {out / 'canvas.csv'} and {out / 'anchors.csv'}")
    return 0


def cmd_plot_data(args) -> int:
    cfg = _base_config(args)
    ds = load_dataset(cfg)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    a, b = ds.boundaries()
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "split"] + [f"ch{c}" for c in range(ds.C)])
        for t, row in enumerate(ds.rows):
            split = "train" if t < a else ("val" if t < b else "test")
            w.writerow([t, split] + [_num(v) for v in row])
    if args.run_dir:
        _, model = _load_run(Path(args.run_dir))
        splits = make_splits(ds, model.cfg.I, model.cfg.O)
        x, y = (arr[args.window : args.window + 1] for arr in splits.test)
        pred = model.predict(x)[0]
        fpath = out.with_name(out.stem + "_forecast.csv")
        with open(fpath, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "channel", "target", "forecast"])
            for s in range(pred.shape[0]):
                for c in range(pred.shape[1]):
                    w.writerow([s, c, _num(y[0, s, c]), _num(pred[s, c])])
        print(f"wrote {fpath}")
    print(f"wrote {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="timegs", description="Gaussian-splatting forecaster")
    parser.add_argument("--threads", type=int, help="cap BLAS/OpenMP threads")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train and report test metrics")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("ablate", help="train an ablated variant")
    _add_config_flags(p)
    p.add_argument("--variant", required=True, help=f"one of {', '.join(ABLATIONS)} or 'all'")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("eval", help="re-evaluate a saved run")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--splits", default="test")
    p.add_argument("--batch-size", type=int)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("dump-bank", help="write the basis bank as text")
    _add_config_flags(p)
    p.add_argument("--output", default="bank.txt")
    p.set_defaults(func=cmd_dump_bank)

    p = sub.add_parser("dump-render", help="per-branch canvases and per-anchor splats as CSV")
    _add_config_flags(p)
    p.add_argument("--run-dir")
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument("--window", type=int, default=0)
    p.set_defaults(func=cmd_dump_render)

    p = sub.add_parser("plot-data", help="write the series (and optionally a forecast) as CSV")
    _add_config_flags(p)
    p.add_argument("--output", default="series.csv")
    p.add_argument("--run-dir")
    p.add_argument("--window", type=int, default=0)
    p.set_defaults(func=cmd_plot_data)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    ctx = contextlib.nullcontext()
    if args.threads:
        from threadpoolctl import threadpool_limits

        ctx = threadpool_limits(limits=args.threads)
    try:
        with ctx:
            return args.func(args)
    except (FileNotFoundError, ValueError, KeyError) as exc:
        print(f"timegs {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
