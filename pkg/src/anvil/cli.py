"""Command line entry point (``anvil`` / ``python -m anvil``).

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import attention, baselines, evaluation, radio_sim
from .errors import ConfigError, DataError, NumericError
from .evaluation import EvalConfig
from .fingerprint import load_database, load_queries, split_indices
from .serialize import load_model, save_model

log = logging.getLogger("anvil")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
TRAIN_FRAMEWORKS = ("anvil", "knn-euclid", "knn-pearson", "adtrain", "ffdnn")


def _read_json(path):
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None


def _eval_config(doc, seed) -> EvalConfig:
    cfg = EvalConfig.from_dict(doc)
    return cfg if seed is None else cfg.with_seed(seed)


def cmd_synth(args):
    cfg = radio_sim.SynthConfig.from_dict(_read_json(args.config), seed=args.seed)
    written = radio_sim.write_suite(cfg, args.out)
    print(f"wrote {len(written)} datasets under {args.out}")


def _resolve_dataset(data, device):
    path = Path(data)
    if path.is_dir():
        if device is None:
            raise ConfigError("--device is required when --data is a directory")
        path = path / f"{device}.csv"
    if not path.exists():
        raise DataError(f"dataset {path} not found")
    return path


def cmd_train(args):
    seed = 0 if args.seed is None else args.seed
    cfg = _eval_config(_read_json(args.config), seed)
    path = _resolve_dataset(args.data, args.device)
    db = load_database(path)
    train_rows, _ = split_indices(db, cfg.n_train, cfg.n_test, seed)
    train_db = db.subset(train_rows)
    history = []
    fw = args.framework
    if fw == "anvil":
        model, report = attention.train(train_db, cfg.anvil, seed)
        history = list(zip(report.losses, report.accuracies))
        save_model(model, args.out)
        print(f"anvil: {report.epochs} epochs, {report.n_params} trainable parameters")
    elif fw in ("knn-euclid", "knn-pearson"):
        metric = baselines.EUCLIDEAN if fw == "knn-euclid" else baselines.PEARSON
        model = baselines.knn_fit(train_db, baselines.KnnConfig(cfg.knn.k, metric))
        save_model(model, args.out, data_ref=(path.resolve(), train_rows))
    elif fw in ("adtrain", "ffdnn"):
        acfg = cfg.adtrain if fw == "adtrain" else replace(
            cfg.adtrain, input_noise_sigma=0.0, label_noise_p=0.0, fast=None)
        model, (losses, accs) = baselines.adtrain_train(train_db, acfg, seed)
        history = list(zip(losses, accs))
        save_model(model, args.out)
    else:
        raise ConfigError(f"unknown framework {fw!r}")
    report_path = Path(args.out).with_suffix(".train.csv")
    with open(report_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "loss", "train_accuracy"])
        for i, (loss, acc) in enumerate(history):
            w.writerow([i, repr(float(loss)), repr(float(acc))])
    print(f"model written to {args.out}")


def cmd_predict(args):
    model = load_model(args.model)
    X, devices, rp_true, xy_true = load_queries(args.query, model.registry)
    rp, xy = model.predict_many(X)
    out = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["row", "device_id", "rp_id", "x_m", "y_m", "error_m"])
        for i in range(len(devices)):
            err = ""
            if np.all(np.isfinite(xy_true[i])):
                err = repr(evaluation.localization_error(xy[i], xy_true[i]))
            w.writerow([i, devices[i], int(rp[i]), repr(float(xy[i, 0])), repr(float(xy[i, 1])), err])
    finally:
        if args.out:
            out.close()


def _suite_splits(data, cfg, seed):
    suite = evaluation.load_suite_dir(data)
    return {fid: evaluation.split_devices(dbs, cfg.n_train, cfg.n_test, seed) for fid, dbs in suite.items()}


def cmd_eval_matrix(args):
    seed = 0 if args.seed is None else args.seed
    cfg = _eval_config(_read_json(args.config), None)
    frameworks = [f for f in args.frameworks.split(",") if f]
    for f in frameworks:
        if f not in evaluation.FRAMEWORKS:
            raise ConfigError(f"unknown framework {f!r}")
    matrices = [evaluation.cross_device_matrix(frameworks, ds, seed, fid, cfg)
                for fid, ds in _suite_splits(args.data, cfg, seed).items()]
    out = Path(args.out)
    evaluation.emit_report(matrices, out / "matrix.csv", "csv")
    evaluation.emit_report(matrices, out / "matrix.md", "md")
    summary = evaluation.Summary([r for m in matrices for r in m.summary().rows])
    evaluation.emit_report(summary, out / "summary.csv", "csv")
    evaluation.emit_report(summary, out / "summary.md", "md")
    print(evaluation.summary_markdown(summary))


def cmd_ablate(args):
    seed = 0 if args.seed is None else args.seed
    cfg = _eval_config(_read_json(args.config), None)
    summary = evaluation.ablate_fast(_suite_splits(args.data, cfg, seed), seed, cfg)
    out = Path(args.out)
    evaluation.emit_report(summary, out / "ablation.csv", "csv")
    evaluation.emit_report(summary, out / "ablation.md", "md")
    print(evaluation.summary_markdown(summary))


def build_parser():
    p = argparse.ArgumentParser(prog="anvil", description="Device-invariant WiFi fingerprint localization toolkit")
    p.add_argument("--seed", type=int, default=None, help="global seed (overrides config files)")
    p.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic multi-device benchmark")
    s.add_argument("--config", help="synth JSON config (default: built-in 4-floorplan, 6-device suite)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("train", help="train one framework on one device's dataset")
    s.add_argument("--framework", required=True, choices=TRAIN_FRAMEWORKS)
    s.add_argument("--data", required=True, help="dataset CSV, or a floorplan directory with --device")
    s.add_argument("--device")
    s.add_argument("--config", help="training JSON config")
    s.add_argument("--out", required=True, help="model artifact path (.json)")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("predict", help="locate the fingerprints of a query CSV")
    s.add_argument("--model", required=True)
    s.add_argument("--query", required=True)
    s.add_argument("--out", help="output CSV (default: stdout)")
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("eval-matrix", help="offline x online device error matrices")
    s.add_argument("--frameworks", default="knn-euclid,knn-pearson,adtrain,anvil")
    s.add_argument("--data", required=True)
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_eval_matrix)

    s = sub.add_parser("ablate", help="with/without FASt comparison")
    s.add_argument("--data", required=True)
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_ablate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level), format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
