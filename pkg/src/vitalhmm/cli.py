"""Command-line entry point.

Subcommands: ``synth`` writes a synthetic cohort to CSV files, ``train``
fits one configured model on a whole dataset and saves it, ``eval``
scores a saved model on a dataset, ``sweep`` runs the full experiment
grid, and ``report`` re-renders a results table. Failures print one
machine-readable JSON line to stderr and exit nonzero (2 for
configuration problems, 1 otherwise).
"""

import argparse
import json
import os
import sys

import numpy as np

from . import harness, model_io
from .errors import ConfigError, ContractError, VitalHmmError
from .features import sequence_features, static_features, static_matrix
from .synth import SynthSpec, write_cohort


def _load_config(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def _experiment_config(doc, drop=()):
    doc = {k: v for k, v in doc.items() if k not in drop}
    return harness.ExperimentConfig.from_dict(doc)


def _cell_from_config(doc):
    section = doc.get("cell")
    if not isinstance(section, dict) or "family" not in section:
        raise ConfigError("config needs a 'cell' section with a 'family'")
    return harness.Cell(
        section["family"],
        section.get("feature", "raw"),
        dict(section.get("params", {})),
    )


def cmd_synth(args):
    doc = _load_config(args.config)
    section = doc.get("data", {}).get("synthetic", doc.get("synthetic", doc))
    section = dict(section)
    seed = section.pop("seed", 0)
    if args.seed is not None:
        seed = args.seed
    spec = SynthSpec(**section)
    signal_paths, events_path = write_cohort(spec, seed, args.out_dir)
    print(json.dumps(
        {"patients": len(signal_paths), "events": events_path, "seed": seed}
    ))
    return 0


def cmd_train(args):
    doc = _load_config(args.config)
    cell = _cell_from_config(doc)
    cfg = _experiment_config(doc, drop=("cell",))
    dataset = harness.resolve_dataset(cfg)
    seed = args.seed if args.seed is not None else cfg.train_seed
    fitted = harness.fit_single(dataset, cell, cfg, seed=seed)
    out_path = os.path.join(args.out_dir, "model.json")
    os.makedirs(args.out_dir, exist_ok=True)
    metadata = {"family": cell.family, "feature": cell.feature,
                "params": cell.params}
    if fitted[0] == "pair":
        _, pair, discriminative, std = fitted
        model_io.save_pair(
            out_path, pair, discriminative=discriminative,
            metadata=metadata, standardizer=std,
        )
    else:
        _, model, std = fitted
        model_io.save_baseline(out_path, model, metadata=metadata, standardizer=std)
    print(json.dumps({"model": out_path, "frames": len(dataset)}))
    return 0


def _evaluate_pair(pair, info, dataset):
    feature = info["metadata"].get("feature", "raw")
    std = info["standardizer"]
    ff = sequence_features(dataset.frames, feature)
    if std is not None:
        ff = std.apply(ff)
    X = np.stack([f.data for f in ff])
    predicted = pair.classify(X)
    return predicted, dataset.labels()


def _evaluate_baseline(model, info, dataset):
    feature = info["metadata"].get("feature", "hrci")
    X, y = static_matrix(static_features(dataset.frames, feature))
    std = info["standardizer"]
    if std is not None:
        X = std.apply_matrix(X)
    return model.predict(X), y


def cmd_eval(args):
    doc = _load_config(args.config)
    cfg = _experiment_config(doc, drop=("cell",))
    dataset = harness.resolve_dataset(cfg)
    with open(args.model) as fh:
        fmt = json.load(fh).get("format")
    if fmt == model_io.HMM_FORMAT:
        pair, info = model_io.load_pair(args.model)
        predicted, y = _evaluate_pair(pair, info, dataset)
    elif fmt == model_io.BASELINE_FORMAT:
        model, info = model_io.load_baseline(args.model)
        predicted, y = _evaluate_baseline(model, info, dataset)
    else:
        raise ContractError(f"{args.model}: unrecognized model format {fmt!r}")
    accuracy = float((predicted == y).mean())
    print(json.dumps({"accuracy": accuracy, "n_frames": int(y.shape[0]),
                      "model": args.model}))
    return 0


def cmd_sweep(args):
    doc = _load_config(args.config)
    cfg = _experiment_config(doc)
    table = harness.run_experiment(cfg)
    run_dir = os.path.join(args.out_dir, f"run-{harness.config_digest(doc)}")
    paths = harness.write_results(table, run_dir)
    print(json.dumps({"run_dir": run_dir, **paths}))
    return 0


def cmd_report(args):
    rows = harness.read_results_csv(args.results)
    if not rows:
        raise ContractError(f"{args.results} holds no result rows")
    table = harness.table_from_rows(rows)
    os.makedirs(args.out_dir, exist_ok=True)
    if args.format == "markdown":
        path = os.path.join(args.out_dir, "report.md")
        harness.write_markdown(table, path)
    else:
        path = os.path.join(args.out_dir, "report.csv")
        harness.write_csv(table, path)
    print(json.dumps({"report": path}))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="vitalhmm",
        description="Sequence-model sepsis-risk experiments on vital signs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic cohort as CSV files")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="fit one model on a whole dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a saved model on a dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--model", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="run the full experiment grid")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="re-render a results table")
    p.add_argument("--results", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--format", choices=("csv", "markdown"), default="markdown")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 2
    except (VitalHmmError, OSError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
