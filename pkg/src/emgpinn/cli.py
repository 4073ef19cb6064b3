"""Command-line entry point: synth, train, eval, invdyn, gradcheck."""
import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import config as cfgmod
from . import data, evaluation, gradcheck, network, training
from .errors import (ConfigError, EmgPinnError, InvalidAnthropometrics, NonFinite, NonFiniteLoss,
                     SchemaError, SingularMassMatrix)

log = logging.getLogger("emgpinn")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

_NUMERIC = (NonFiniteLoss, NonFinite, SingularMassMatrix, FloatingPointError, ArithmeticError)


def _setup_logging():
    level = os.environ.get("EMGPINN_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _resolve(args):
    cfg = cfgmod.load(args.config)
    if args.seed is not None:
        cfg = cfgmod.with_seed(cfg, args.seed)
    return cfg


def _write_resolved(cfg, out):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "resolved_config.json").write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")


def _dataset(cfg, path):
    path = path or cfg["data"]["path"]
    if path is None:
        raise ConfigError("no dataset given (use --data or data.path)", "data.path")
    return data.load_trials(path)


# --- commands --------------------------------------------------------------

def cmd_synth(args):
    cfg = _resolve(args)
    synth = cfgmod.build_synth_config(cfg)
    if args.noise is not None:
        synth = replace(synth, emg=replace(synth.emg, noise_std=args.noise))
    runs = data.make_synthetic_dataset(cfgmod.build_model(cfg), synth)
    data.save_runset(runs, args.out)
    _write_resolved(cfg, args.out)
    print(f"wrote {len(runs)} runs ({sum(len(r.trials) for r in runs.runs)} trials) to {args.out}")
    return EXIT_OK


def cmd_train(args):
    cfg = _resolve(args)
    if args.epochs is not None:
        cfg["training"]["epochs_per_load"] = args.epochs
        cfg = cfgmod.validate(cfg)
    runs = _dataset(cfg, args.data)
    parts = data.split(runs, cfgmod.build_split(cfg), cfg["data"]["split_seed"])
    tc = cfgmod.build_train_config(cfg)
    arch = cfgmod.build_architecture(cfg)
    model = cfgmod.build_model(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_resolved(cfg, out)

    log_path = out / "train_log.csv"
    with log_path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(training.LOG_COLUMNS)

        def on_epoch(rec):
            w.writerow(rec.row())

        res = training.train(parts["train"], model, tc, mode=args.mode, val_set=parts["val"],
                             arch=arch, on_epoch=on_epoch)
    meta = {"mode": args.mode, "best_epoch": res.best_epoch,
            "split": {k: [r.name for r in v.runs] for k, v in parts.items()}}
    network.save_checkpoint(out / "checkpoint.json", res.best_params, res.norm, cfg, meta)
    network.save_checkpoint(out / "final.json", res.params, res.norm, cfg, meta)
    last = res.history[-1]
    print(f"{args.mode}: {len(res.history)} epochs, final J={last.J:.6g}, best epoch {res.best_epoch}")
    return EXIT_OK


def cmd_eval(args):
    cfg = _resolve(args)
    runs = _dataset(cfg, args.data)
    parts = data.split(runs, cfgmod.build_split(cfg), cfg["data"]["split_seed"])
    model = cfgmod.build_model(cfg)
    out = Path(args.out)
    reports = []
    for ck in args.checkpoint:
        ck = Path(ck)
        if not ck.is_file():
            raise ConfigError("checkpoint not found", str(ck))
        try:
            params, norm, doc = network.load_checkpoint(ck)
        except (ValueError, KeyError, json.JSONDecodeError) as e:
            raise ConfigError(f"unreadable checkpoint: {e}", str(ck)) from None
        tag = doc.get("meta", {}).get("mode", ck.stem)
        if any(r.tag == tag for r in reports):
            tag = f"{tag}_{len(reports)}"
        reports.append(evaluation.evaluate(params, parts["test"], model, norm, tag))
        for run in parts["test"].runs:
            for k, trial in enumerate(run.trials):
                evaluation.export_traces(params, trial, norm, out / "traces" / tag / f"{run.name}_trial_{k}.csv")
    path = evaluation.write_report(reports, out)
    _write_resolved(cfg, out)
    for r in reports:
        print(f"{r.tag}: mean R {r.mean_r():.4f}")
    print(f"report: {path}")
    return EXIT_OK


def cmd_invdyn(args):
    cfg = _resolve(args)
    load = args.load
    src = Path(args.trial)
    if load is None:
        m = data.RUN_DIR.match(src.parent.name)
        load = float(m["load"]) if m else 0.0
    trial = data.read_trial_csv(src, load_kg=load)
    sigma, hw = cfgmod.gaussian_params(cfg)
    out = data.benchmark_torque(trial, cfgmod.build_model(cfg), sigma, hw)
    data.write_trial_csv(out, args.out)
    print(f"wrote {len(out)} rows with torques to {args.out}")
    return EXIT_OK


def cmd_gradcheck(args):
    seed = 0 if args.seed is None else args.seed
    _resolve(args)
    if args.inject_fault:
        if args.inject_fault not in ad.PRIMITIVES:
            raise ConfigError(f"unknown primitive {args.inject_fault!r}", "--inject-fault")
        with ad.inject_fault(args.inject_fault):
            errors, failed = gradcheck.run(seed, args.draws)
    else:
        errors, failed = gradcheck.run(seed, args.draws)
    width = max(len(k) for k in errors)
    for name, e in errors.items():
        status = "FAIL" if name in failed else "ok"
        print(f"{name:<{width}}  max_rel_err={e:.3e}  {status}")
    if failed:
        print("gradient check failed: " + ", ".join(failed))
        return EXIT_NUMERIC
    print(f"all {len(errors)} checks passed (tol {gradcheck.TOLERANCE:g})")
    return EXIT_OK


# --- parser ----------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config merged over the defaults")
    common.add_argument("--seed", type=int, help="overrides every seed in the config")

    p = argparse.ArgumentParser(prog="emgpinn", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset")
    s.add_argument("--out", required=True)
    s.add_argument("--noise", type=float, help="EMG noise std (overrides config)")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("train", parents=[common], help="train a model")
    s.add_argument("--data", help="dataset directory (defaults to data.path)")
    s.add_argument("--mode", choices=("pinn", "ann"), default="pinn")
    s.add_argument("--epochs", type=int, help="epochs per load (overrides config)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", parents=[common], help="evaluate checkpoints on the test split")
    s.add_argument("--checkpoint", action="append", required=True)
    s.add_argument("--data")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("invdyn", parents=[common], help="add benchmark torques to a trial CSV")
    s.add_argument("--trial", required=True)
    s.add_argument("--load", type=float, help="hand load in kg (default: from run directory name)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_invdyn)

    s = sub.add_parser("gradcheck", parents=[common], help="verify gradients by finite differences")
    s.add_argument("--inject-fault", metavar="PRIMITIVE", help="corrupt one derivative rule")
    s.add_argument("--draws", type=int, default=3)
    s.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None):
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        with np.errstate(over="raise", invalid="raise", divide="raise"):
            return args.func(args)
    except (ConfigError, SchemaError, InvalidAnthropometrics) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except _NUMERIC as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except EmgPinnError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
