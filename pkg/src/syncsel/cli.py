"""``syncsel`` command line: gen, train, eval, verify, sweep.

Exit codes: 0 success, 1 configuration or data error, 2 non-finite training
loss, 3 failed theory checks (``verify``) or failed sweep cells.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

from .config import RunConfig
from .data import load_csv, save_csv, split
from .errors import ConfigError, DataError, NonFiniteLossError
from .evaluate import (
    DEFAULT_GRID,
    calibrate_threshold,
    check_mechanism,
    collect,
    confusion_table,
    parse_mechanism,
    rc_curve,
    rc_rows,
    region_rejection_rates,
    selective_metrics,
    write_confusion,
    write_rc_curve,
    write_regions,
)
from .network import init_model, load_checkpoint, save_checkpoint
from .scores import SR
from .theory import theory_suite
from .train import train, write_metrics, write_trace

log = logging.getLogger("syncsel")

CHECKPOINT_NAME = "checkpoint"


def _err(msg):
    print(f"syncsel: error: {msg}", file=sys.stderr)


def _load_config(args):
    cfg = RunConfig.load(args.config)
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if getattr(args, "out", None):
        over["out_dir"] = args.out
    return cfg.with_overrides(**over) if over else cfg


def _parse_grid(text):
    if text is None:
        return list(DEFAULT_GRID)
    try:
        grid = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"bad grid {text!r}") from None
    if not grid or any(not 0.0 < c <= 1.0 for c in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
        raise ConfigError("grid must be strictly increasing values in (0, 1]")
    return grid


def _train_run(cfg, out_dir, trace=False):
    """Train per ``cfg`` and write checkpoint, metrics.csv and config.resolved."""
    ds = cfg.training_set()
    sync = cfg.sync_config()
    model = init_model(ds.d, cfg["hidden"], ds.C, cfg["g_hidden"], cfg["seed"], mode=sync.model_mode)
    tcfg = cfg.train_config(ds.N)
    steps = [] if trace else None
    model, records = train(model, ds, tcfg, step_trace=steps)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model, out_dir / CHECKPOINT_NAME)
    write_metrics(records, out_dir / "metrics.csv")
    (out_dir / "config.resolved").write_text(cfg.render())
    if trace:
        write_trace(steps, out_dir / "trace.csv")
    return model, records


def cmd_train(args):
    cfg = _load_config(args)
    out_dir = Path(cfg["out_dir"])
    _, records = _train_run(cfg, out_dir, trace=args.trace)
    if records:
        r = records[-1]
        print(f"trained {len(records)} epochs: loss {r.mean_total_loss:.6f} coverage {r.empirical_coverage:.4f} acc {r.train_accuracy:.4f}")
    print(f"wrote {out_dir}")
    return 0


def _evaluate(model, test, cal, mechanism, grid, coverage, out_dir):
    """Write rc_curve.csv, confusion.csv and regions.csv; return the curve."""
    recs = collect(model, test, mechanism)
    cal_recs = recs if cal is None else collect(model, cal, mechanism)
    points = rc_curve(recs, grid, calibration=cal_recs)
    tau = calibrate_threshold(cal_recs, coverage)
    fr = confusion_table(recs, tau)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_rc_curve(points, out_dir / "rc_curve.csv")
    write_confusion(fr, selective_metrics(recs, tau).coverage, out_dir / "confusion.csv")
    write_regions(region_rejection_rates(recs, tau), out_dir / "regions.csv")
    return points


def _mechanism(model, text):
    mech = parse_mechanism(text)
    note = check_mechanism(model, mech)
    if note:
        print(f"syncsel: note: {note}", file=sys.stderr)
    return mech


def cmd_eval(args):
    if not args.checkpoint or not args.data:
        raise ConfigError("eval needs --checkpoint and --data")
    try:
        model = load_checkpoint(args.checkpoint)
    except FileNotFoundError:
        raise DataError(f"checkpoint not found: {args.checkpoint}") from None
    test = load_csv(args.data)
    cal = load_csv(args.cal) if args.cal else None
    mech = _mechanism(model, args.mechanism)
    out_dir = Path(args.out or "eval")
    points = _evaluate(model, test, cal, mech, _parse_grid(args.grid), args.coverage, out_dir)
    for p in points:
        acc = "NA" if p.accuracy is None else f"{p.accuracy:.6f}"
        print(f"coverage {p.coverage:.6f} accuracy {acc}")
    return 0


def cmd_verify(args):
    seed = 0 if args.seed is None else args.seed
    reports = theory_suite(seed=seed, modulus_scale=0.5 if args.halve_modulus else 1.0)
    failed = [r.check_name for r in reports if not r.passed]
    for r in reports:
        print(r.to_json())
    if failed:
        _err("failed checks: " + ", ".join(failed))
        return 3
    return 0


def _gamma_list(text):
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"bad gamma list {text!r}") from None
    if not vals or any(not (g > 0 and math.isfinite(g)) for g in vals):
        raise ConfigError("gamma values must be positive")
    uniq = list(dict.fromkeys(vals))
    if len(uniq) < len(vals):
        print("syncsel: warning: duplicate gamma values removed", file=sys.stderr)
    return uniq


def cmd_sweep(args):
    cfg = _load_config(args)
    gammas = _gamma_list(args.gamma or "0.5,1,2.5")
    grid = _parse_grid(args.grid)
    root = Path(cfg["out_dir"])
    if args.data:
        test, cal = load_csv(args.data), (load_csv(args.cal) if args.cal else None)
    elif cfg["data"]:
        raise ConfigError("sweep with a CSV training set needs --data for evaluation")
    else:
        _, cal, test = split(cfg.full_dataset(), cfg.split_spec())
    rows = ["gamma,mechanism,coverage,threshold,risk,accuracy"]
    failures = []
    for g in gammas:
        cell = cfg.with_overrides(score=f"smp:{g!r}", out_dir=str(root / f"gamma_{g:g}"))
        try:
            model, _ = _train_run(cell, Path(cell["out_dir"]))
            for name, mech in (("head", "head"), ("sr", SR)):
                sub = Path(cell["out_dir"]) / f"eval_{name}"
                pts = _evaluate(model, test, cal, mech, grid, args.coverage, sub)
                rows += [f"{g:g},{name},{row}" for row in rc_rows(pts)]
        except (ConfigError, DataError, NonFiniteLossError, ValueError) as exc:
            failures.append(g)
            _err(f"gamma {g:g}: {exc}")
    root.mkdir(parents=True, exist_ok=True)
    (root / "sweep.csv").write_text("\n".join(rows) + "\n")
    print(f"wrote {root / 'sweep.csv'}")
    return 3 if failures else 0


def cmd_gen(args):
    cfg = _load_config(args)
    out_dir = Path(cfg["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    parts = split(cfg.full_dataset(), cfg.split_spec())
    for name, ds in zip(("train", "cal", "test"), parts):
        save_csv(ds, out_dir / f"{name}.csv")
    print(f"wrote train/cal/test CSVs ({', '.join(str(p.N) for p in parts)} rows) to {out_dir}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="syncsel", description="Selective classification with SYNC, SN and DG losses.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", required=True)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out")

    sp = sub.add_parser("train", help="train a model from a config file")
    common(sp)
    sp.add_argument("--trace", action="store_true", help="also write per-step losses to trace.csv")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="risk-coverage evaluation of a checkpoint")
    sp.add_argument("--checkpoint")
    sp.add_argument("--data")
    sp.add_argument("--cal", help="calibration CSV for thresholds (default: the evaluated data)")
    sp.add_argument("--mechanism", default="head", help="head, sr, negent or smp:<gamma>")
    sp.add_argument("--grid", help="comma-separated coverages (default 0.1,...,1.0)")
    sp.add_argument("--coverage", type=float, default=0.7, help="coverage for confusion/regions tables")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("verify", help="numerical checks of the score and smoothness bounds")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--halve-modulus", action="store_true", help=argparse.SUPPRESS)
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("sweep", help="train and evaluate once per SMP exponent")
    common(sp)
    sp.add_argument("--gamma", help="comma-separated exponents (default 0.5,1,2.5)")
    sp.add_argument("--grid")
    sp.add_argument("--data", help="evaluation CSV (default: generated test split)")
    sp.add_argument("--cal", help="calibration CSV")
    sp.add_argument("--coverage", type=float, default=0.7)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("gen", help="write generated train/cal/test splits as CSV")
    common(sp)
    sp.set_defaults(func=cmd_gen)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except NonFiniteLossError as exc:
        _err(str(exc))
        return 2
    except (ConfigError, DataError) as exc:
        _err(str(exc))
        return 1
    except OSError as exc:
        _err(f"{exc.filename}: {exc.strerror}" if exc.filename else str(exc))
        return 1


if __name__ == "__main__":
    sys.exit(main())
