"""Config-driven experiment runner.

Repeats the evaluation protocol: split patients, fit standardization and
class priors on the training side only, train each configured model
family over its hyper-parameter grid, and score frame-level accuracy on
the held-out patients. Every grid cell derives its seed from the config
seeds, the repeat index, and a family-neutral cell key, so re-running a
cell reproduces its accuracy exactly and result files are byte-identical
across runs. Generative and discriminatively fine-tuned flow pairs share
the same base-model seed, making their accuracies directly comparable.
"""

import csv
import hashlib
import json
import logging
import os
import zlib
from dataclasses import dataclass, field

import numpy as np

from .baselines import elm_fit, logreg_cv_grid
from .dataset import load_cohort, patient_split
from .discriminative import DiscriminativeConfig, discriminative_finetune
from .errors import ConfigError, VitalHmmError
from .features import (
    STD_FLOOR,
    Standardizer,
    sequence_features,
    standardize_fit,
    static_features,
    static_matrix,
)
from .flow import FlowMstepConfig, train_flow_hmm
from .hmm import BaumWelchConfig, ClassifierPair, log_priors_from_labels, train_gmm_hmm
from .optim import AdamConfig
from .synth import SynthSpec, generate_dataset

log = logging.getLogger(__name__)

FAMILIES = ("gmm_hmm", "flow_hmm", "dflow_hmm", "logreg", "elm")


@dataclass
class ExperimentConfig:
    data: dict
    families: tuple = FAMILIES
    hmm_features: tuple = ("raw",)
    logreg_features: tuple = ("hrci",)
    elm_features: tuple = ("flat",)
    states: tuple = (3,)
    gmm_components: tuple = (4,)
    flows_per_state: tuple = (1,)
    flow_chains: tuple = (4,)
    repeats: int = 3
    test_fraction: float = 0.3
    split_seed: int = 101
    train_seed: int = 202
    max_train_frames_per_class: int | None = None
    bw_max_iters: int = 30
    bw_tol: float = 1e-3
    flow_bw_max_iters: int = 8
    flow_bw_tol: float = 1e-2
    flow_mstep_steps: int = 10
    flow_step_size: float = 1e-2
    elm_hidden: int = 100
    elm_ridge: float = 1e-6
    disc_epochs: int = 1
    disc_batch_size: int = 8
    disc_step_size: float = 1e-3

    def __post_init__(self):
        self.families = tuple(self.families)
        unknown = set(self.families) - set(FAMILIES)
        if unknown:
            raise ConfigError(f"unknown model families {sorted(unknown)}")
        if not self.families:
            raise ConfigError("no model families configured")
        if self.repeats < 1:
            raise ConfigError("repeats must be at least 1")
        for name in ("hmm_features", "logreg_features", "elm_features",
                     "states", "gmm_components", "flows_per_state", "flow_chains"):
            value = tuple(getattr(self, name))
            if not value:
                raise ConfigError(f"grid {name} is empty")
            setattr(self, name, value)

    @classmethod
    def from_dict(cls, d):
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        if "data" not in d:
            raise ConfigError("config needs a 'data' section")
        return cls(**d)


@dataclass
class Cell:
    family: str
    feature: str
    params: dict

    @property
    def param_text(self):
        return ",".join(f"{k}={self.params[k]}" for k in sorted(self.params))

    @property
    def key(self):
        return f"{self.family}|{self.feature}|{self.param_text}"


@dataclass
class CellResult:
    cell: Cell
    accuracies: list = field(default_factory=list)
    status: str = "ok"
    error: str | None = None

    @property
    def mean(self):
        return float(np.mean(self.accuracies)) if self.accuracies else None

    @property
    def std(self):
        return float(np.std(self.accuracies)) if self.accuracies else None


@dataclass
class ResultTable:
    rows: list
    provenance: list = field(default_factory=list)


def enumerate_cells(cfg):
    cells = []
    for family in cfg.families:
        if family == "gmm_hmm":
            for feat in cfg.hmm_features:
                for n in cfg.states:
                    for K in cfg.gmm_components:
                        cells.append(Cell(family, feat, {"states": n, "components": K}))
        elif family in ("flow_hmm", "dflow_hmm"):
            for feat in cfg.hmm_features:
                for n in cfg.states:
                    for M in cfg.flows_per_state:
                        for C in cfg.flow_chains:
                            cells.append(
                                Cell(family, feat,
                                     {"states": n, "flows": M, "chains": C})
                            )
        elif family == "logreg":
            for feat in cfg.logreg_features:
                cells.append(Cell(family, feat, {}))
        elif family == "elm":
            for feat in cfg.elm_features:
                cells.append(Cell(family, feat, {"hidden": cfg.elm_hidden}))
    cells.sort(key=lambda c: (c.family, c.feature, c.param_text))
    return cells


def _seed_from_key(base, repeat, key):
    return base + 7919 * repeat + zlib.crc32(key.encode()) % 100003


def resolve_dataset(cfg):
    """Materialize the configured data source as a labeled Dataset."""
    data = cfg.data
    if "synthetic" in data:
        section = dict(data["synthetic"])
        seed = section.pop("seed", 0)
        return generate_dataset(SynthSpec(**section), seed)
    if "csv" in data:
        section = data["csv"]
        signals_dir = section["signals_dir"]
        paths = {}
        for name in sorted(os.listdir(signals_dir)):
            if name.endswith("_signals.csv"):
                paths[name[: -len("_signals.csv")]] = os.path.join(signals_dir, name)
        if not paths:
            raise ConfigError(f"no *_signals.csv files under {signals_dir}")
        return load_cohort(paths, section["events"])
    raise ConfigError("data section needs either 'synthetic' or 'csv'")


class RepeatContext:
    """Per-repeat train/test split with lazily built feature bundles.

    The training-frame cap is drawn once per repeat on raw frame indices,
    so every feature mode and model family trains on the same frames.
    """

    def __init__(self, dataset, cfg, repeat):
        self.cfg = cfg
        self.repeat = repeat
        self.train, self.test = patient_split(
            dataset, cfg.test_fraction, cfg.split_seed + repeat
        )
        self.log_priors = log_priors_from_labels(self.train.labels())
        self._cap_idx = self._draw_cap_indices()
        self._seq = {}
        self._static = {}

    def _draw_cap_indices(self):
        y = self.train.labels()
        cap = self.cfg.max_train_frames_per_class
        keep = []
        rng = np.random.default_rng(self.cfg.train_seed + 1009 * self.repeat)
        for cls in (0, 1):
            idx = np.flatnonzero(y == cls)
            if cap is not None and idx.shape[0] > cap:
                idx = np.sort(rng.choice(idx, size=cap, replace=False))
            keep.append(idx)
        return keep

    def seq_bundle(self, feature):
        if feature not in self._seq:
            train_ff = sequence_features(self.train.frames, feature)
            std = standardize_fit(train_ff)
            train_std = std.apply(train_ff)
            test_std = std.apply(sequence_features(self.test.frames, feature))
            X_train = np.stack([f.data for f in train_std])
            idx0, idx1 = self._cap_idx
            mixed = np.concatenate([idx0, idx1])
            self._seq[feature] = {
                "X0": X_train[idx0],
                "X1": X_train[idx1],
                "X_disc": X_train[mixed],
                "y_disc": self.train.labels()[mixed],
                "X_test": np.stack([f.data for f in test_std]),
                "y_test": self.test.labels(),
                "standardizer": std,
            }
        return self._seq[feature]

    def static_bundle(self, feature):
        if feature not in self._static:
            X_train, y_train = static_matrix(
                static_features(self.train.frames, feature)
            )
            std = Standardizer(
                X_train.mean(axis=0),
                np.maximum(X_train.std(axis=0), STD_FLOOR),
            )
            X_test, y_test = static_matrix(
                static_features(self.test.frames, feature)
            )
            self._static[feature] = {
                "X_train": std.apply_matrix(X_train),
                "y_train": y_train,
                "X_test": std.apply_matrix(X_test),
                "y_test": y_test,
                "standardizer": std,
            }
        return self._static[feature]


def _flow_base_key(cell):
    return f"flowbase|{cell.feature}|{cell.param_text}"


def _train_flow_pair(ctx, cell):
    """Class-conditional flow HMMs; shared seed formula for both families."""
    cfg = ctx.cfg
    bundle = ctx.seq_bundle(cell.feature)
    seed = _seed_from_key(cfg.train_seed, ctx.repeat, _flow_base_key(cell))
    bw = BaumWelchConfig(cfg.flow_bw_max_iters, cfg.flow_bw_tol)
    mstep = FlowMstepConfig(
        AdamConfig(step_size=cfg.flow_step_size), cfg.flow_mstep_steps
    )
    models = []
    for cls, X in enumerate((bundle["X0"], bundle["X1"])):
        model, trace = train_flow_hmm(
            X, cell.params["states"], cell.params["flows"], cell.params["chains"],
            2 * seed + cls, bw_config=bw, mstep_config=mstep,
        )
        log.debug(
            "repeat %d class %d flow trace %.2f -> %.2f",
            ctx.repeat, cls, trace[0], trace[-1],
        )
        models.append(model)
    return ClassifierPair(models, ctx.log_priors)


def _run_cell(ctx, cell, flow_pairs):
    cfg = ctx.cfg
    if cell.family in ("gmm_hmm", "flow_hmm", "dflow_hmm"):
        bundle = ctx.seq_bundle(cell.feature)
        if cell.family == "gmm_hmm":
            seed = _seed_from_key(cfg.train_seed, ctx.repeat, cell.key)
            bw = BaumWelchConfig(cfg.bw_max_iters, cfg.bw_tol)
            models = []
            for cls, X in enumerate((bundle["X0"], bundle["X1"])):
                model, _ = train_gmm_hmm(
                    X, cell.params["states"], cell.params["components"],
                    2 * seed + cls, config=bw,
                )
                models.append(model)
            pair = ClassifierPair(models, ctx.log_priors)
        else:
            base_key = (ctx.repeat, _flow_base_key(cell))
            if base_key not in flow_pairs:
                flow_pairs[base_key] = _train_flow_pair(ctx, cell)
            pair = flow_pairs[base_key]
            if cell.family == "dflow_hmm":
                disc = DiscriminativeConfig(
                    epochs=cfg.disc_epochs,
                    batch_size=cfg.disc_batch_size,
                    adam=AdamConfig(step_size=cfg.disc_step_size),
                    seed=_seed_from_key(cfg.train_seed, ctx.repeat, cell.key),
                )
                pair = discriminative_finetune(
                    pair, bundle["X_disc"], bundle["y_disc"], disc
                )
        predicted = pair.classify(bundle["X_test"])
        return float((predicted == bundle["y_test"]).mean())

    bundle = ctx.static_bundle(cell.feature)
    seed = _seed_from_key(cfg.train_seed, ctx.repeat, cell.key)
    if cell.family == "logreg":
        model = logreg_cv_grid(
            bundle["X_train"], bundle["y_train"], seed=seed
        )
    else:
        model = elm_fit(
            bundle["X_train"], bundle["y_train"],
            n_hidden=cfg.elm_hidden, ridge=cfg.elm_ridge, seed=seed,
        )
    predicted = model.predict(bundle["X_test"])
    return float((predicted == bundle["y_test"]).mean())


def fit_single(dataset, cell, cfg, seed=0):
    """Fit one cell on the whole dataset (no split), for the train command.

    Returns ("pair", pair, discriminative_flag, standardizer) for sequence
    families or ("baseline", model, standardizer) for static ones.
    """
    y = dataset.labels()
    if cell.family in ("gmm_hmm", "flow_hmm", "dflow_hmm"):
        ff = sequence_features(dataset.frames, cell.feature)
        std = standardize_fit(ff)
        X = np.stack([f.data for f in std.apply(ff)])
        priors = log_priors_from_labels(y)
        stacks = (X[y == 0], X[y == 1])
        if cell.family == "gmm_hmm":
            base = _seed_from_key(seed, 0, cell.key)
            bw = BaumWelchConfig(cfg.bw_max_iters, cfg.bw_tol)
            models = [
                train_gmm_hmm(
                    Xc, cell.params["states"], cell.params["components"],
                    2 * base + cls, config=bw,
                )[0]
                for cls, Xc in enumerate(stacks)
            ]
            pair = ClassifierPair(models, priors)
            return ("pair", pair, False, std)
        base = _seed_from_key(seed, 0, _flow_base_key(cell))
        bw = BaumWelchConfig(cfg.flow_bw_max_iters, cfg.flow_bw_tol)
        mstep = FlowMstepConfig(
            AdamConfig(step_size=cfg.flow_step_size), cfg.flow_mstep_steps
        )
        models = [
            train_flow_hmm(
                Xc, cell.params["states"], cell.params["flows"],
                cell.params["chains"], 2 * base + cls,
                bw_config=bw, mstep_config=mstep,
            )[0]
            for cls, Xc in enumerate(stacks)
        ]
        pair = ClassifierPair(models, priors)
        if cell.family == "dflow_hmm":
            disc = DiscriminativeConfig(
                epochs=cfg.disc_epochs,
                batch_size=cfg.disc_batch_size,
                adam=AdamConfig(step_size=cfg.disc_step_size),
                seed=_seed_from_key(seed, 0, cell.key),
            )
            pair = discriminative_finetune(pair, X, y, disc)
            return ("pair", pair, True, std)
        return ("pair", pair, False, std)

    X, y = static_matrix(static_features(dataset.frames, cell.feature))
    std = Standardizer(X.mean(axis=0), np.maximum(X.std(axis=0), STD_FLOOR))
    Xs = std.apply_matrix(X)
    base = _seed_from_key(seed, 0, cell.key)
    if cell.family == "logreg":
        model = logreg_cv_grid(Xs, y, seed=base)
    else:
        model = elm_fit(
            Xs, y, n_hidden=cfg.elm_hidden, ridge=cfg.elm_ridge, seed=base
        )
    return ("baseline", model, std)


def run_experiment(cfg, dataset=None):
    """Full sweep; failed cells are recorded and do not stop the run."""
    if dataset is None:
        dataset = resolve_dataset(cfg)
    cells = enumerate_cells(cfg)
    results = {c.key: CellResult(c) for c in cells}
    provenance = []
    for repeat in range(cfg.repeats):
        ctx = RepeatContext(dataset, cfg, repeat)
        flow_pairs = {}
        for cell in cells:
            res = results[cell.key]
            if res.status == "failed":
                continue
            try:
                acc = _run_cell(ctx, cell, flow_pairs)
            except VitalHmmError as exc:
                res.status = "failed"
                res.error = f"{type(exc).__name__}: {exc}"
                log.warning("cell %s failed: %s", cell.key, res.error)
                continue
            res.accuracies.append(acc)
            provenance.append(
                {
                    "family": cell.family,
                    "feature": cell.feature,
                    "params": cell.params,
                    "repeat": repeat,
                    "split_seed": cfg.split_seed + repeat,
                    "cell_seed": _seed_from_key(cfg.train_seed, repeat, cell.key),
                    "accuracy": acc,
                }
            )
    return ResultTable([results[c.key] for c in cells], provenance)


def _fmt(x):
    return repr(float(x))


def write_csv(table, path):
    n_rep = max((len(r.accuracies) for r in table.rows), default=0)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["model", "feature", "params", "status", "mean", "std"]
            + [f"acc_{i}" for i in range(n_rep)]
        )
        for r in table.rows:
            accs = [_fmt(a) for a in r.accuracies]
            accs += [""] * (n_rep - len(accs))
            mean = _fmt(r.mean) if r.mean is not None else ""
            std = _fmt(r.std) if r.std is not None else ""
            w.writerow(
                [r.cell.family, r.cell.feature, r.cell.param_text, r.status,
                 mean, std] + accs
            )


def write_markdown(table, path):
    best = max(
        (r.mean for r in table.rows if r.status == "ok" and r.mean is not None),
        default=None,
    )
    with open(path, "w") as fh:
        fh.write("| model | feature | params | accuracy |\n")
        fh.write("|---|---|---|---|\n")
        for r in table.rows:
            if r.status != "ok" or r.mean is None:
                shown = "failed"
            else:
                shown = f"{r.mean:.4f} ± {r.std:.4f}"
                if best is not None and r.mean == best:
                    shown = f"**{shown}**"
            fh.write(
                f"| {r.cell.family} | {r.cell.feature} | "
                f"{r.cell.param_text or '-'} | {shown} |\n"
            )


def write_cells(table, path):
    with open(path, "w") as fh:
        for entry in table.provenance:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")


def write_results(table, out_dir):
    """results.csv, results.md, cells.jsonl; all byte-deterministic."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "csv": os.path.join(out_dir, "results.csv"),
        "markdown": os.path.join(out_dir, "results.md"),
        "cells": os.path.join(out_dir, "cells.jsonl"),
    }
    write_csv(table, paths["csv"])
    write_markdown(table, paths["markdown"])
    write_cells(table, paths["cells"])
    return paths


def table_from_rows(rows):
    """Rebuild a ResultTable from :func:`read_results_csv` output."""
    out = []
    for row in rows:
        params = {}
        if row["params"]:
            for piece in row["params"].split(","):
                k, _, v = piece.partition("=")
                params[k] = v
        out.append(
            CellResult(
                Cell(row["model"], row["feature"], params),
                list(row["accuracies"]),
                row["status"],
            )
        )
    return ResultTable(out)


def read_results_csv(path):
    """Parse a results.csv back into row dicts with exact float values."""
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            acc_keys = sorted(
                (k for k in rec if k.startswith("acc_")), key=lambda k: int(k[4:])
            )
            rows.append(
                {
                    "model": rec["model"],
                    "feature": rec["feature"],
                    "params": rec["params"],
                    "status": rec["status"],
                    "mean": float(rec["mean"]) if rec["mean"] else None,
                    "std": float(rec["std"]) if rec["std"] else None,
                    "accuracies": [
                        float(rec[k]) for k in acc_keys if rec[k] != ""
                    ],
                }
            )
    return rows


def config_digest(cfg_dict):
    """Stable 12-hex-digit digest of a config mapping, for run directories."""
    blob = json.dumps(cfg_dict, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:12]
