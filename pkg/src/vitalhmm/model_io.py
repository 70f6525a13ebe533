"""JSON serialization for trained models.

Sequence models (single or two-class pairs) live in ``hmm-v1`` files,
static baselines in ``baseline-v1`` files. Floats are written with
Python's shortest round-trip representation, so save followed by load
reproduces every parameter bit for bit.
"""

import json

import numpy as np

from .baselines import ElmModel, LogisticModel
from .errors import ContractError
from .features import Standardizer
from .flow import CouplingLayer, FlowComponent, FlowEmission, MlpParams
from .gmm import GmmEmission
from .hmm import ClassifierPair, HmmModel

HMM_FORMAT = "hmm-v1"
BASELINE_FORMAT = "baseline-v1"


def _arr(x):
    return np.asarray(x, dtype=float).tolist()


def _mlp_to_dict(p):
    return {"w1": _arr(p.w1), "b1": _arr(p.b1), "w2": _arr(p.w2), "b2": _arr(p.b2)}


def _mlp_from_dict(d):
    return MlpParams(
        np.asarray(d["w1"], dtype=float),
        np.asarray(d["b1"], dtype=float),
        np.asarray(d["w2"], dtype=float),
        np.asarray(d["b2"], dtype=float),
    )


def _emission_to_dict(e):
    if isinstance(e, GmmEmission):
        return {
            "kind": "gmm",
            "log_weights": _arr(e.log_weights),
            "means": _arr(e.means),
            "variances": _arr(e.variances),
        }
    if isinstance(e, FlowEmission):
        return {
            "kind": "flow",
            "log_mix_weights": _arr(e.log_mix_weights),
            "components": [
                {
                    "layers": [
                        {
                            "mask": np.asarray(layer.mask, dtype=bool).tolist(),
                            "shift": _mlp_to_dict(layer.shift),
                            "scale": _mlp_to_dict(layer.scale),
                        }
                        for layer in comp.layers
                    ]
                }
                for comp in e.components
            ],
        }
    raise ContractError(f"cannot serialize emission type {type(e).__name__}")


def _emission_from_dict(d):
    kind = d.get("kind")
    if kind == "gmm":
        return GmmEmission(
            np.asarray(d["log_weights"], dtype=float),
            np.asarray(d["means"], dtype=float),
            np.asarray(d["variances"], dtype=float),
        )
    if kind == "flow":
        components = [
            FlowComponent(
                [
                    CouplingLayer(
                        np.asarray(layer["mask"], dtype=bool),
                        _mlp_from_dict(layer["shift"]),
                        _mlp_from_dict(layer["scale"]),
                    )
                    for layer in comp["layers"]
                ]
            )
            for comp in d["components"]
        ]
        return FlowEmission(
            np.asarray(d["log_mix_weights"], dtype=float), components
        )
    raise ContractError(f"unknown emission kind {kind!r}")


def model_to_dict(model):
    kinds = {_emission_to_dict(e)["kind"] for e in model.emissions}
    if len(kinds) != 1:
        raise ContractError("mixed emission kinds in one model")
    return {
        "n_states": model.n_states,
        "log_q": _arr(model.log_q),
        "log_A": _arr(model.log_A),
        "emission_kind": kinds.pop(),
        "emissions": [_emission_to_dict(e) for e in model.emissions],
    }


def model_from_dict(d):
    return HmmModel(
        np.asarray(d["log_q"], dtype=float),
        np.asarray(d["log_A"], dtype=float),
        [_emission_from_dict(e) for e in d["emissions"]],
    )


def _standardizer_to_dict(s):
    if s is None:
        return None
    return {"mean": _arr(s.mean), "std": _arr(s.std)}


def _standardizer_from_dict(d):
    if d is None:
        return None
    return Standardizer(
        np.asarray(d["mean"], dtype=float), np.asarray(d["std"], dtype=float)
    )


def save_model(path, model, metadata=None):
    doc = {
        "format": HMM_FORMAT,
        "kind": "model",
        "model": model_to_dict(model),
        "metadata": metadata or {},
    }
    _dump(path, doc)


def load_model(path):
    doc = _load(path, HMM_FORMAT)
    if doc.get("kind") != "model":
        raise ContractError(f"{path} holds a {doc.get('kind')}, not a single model")
    return model_from_dict(doc["model"]), doc.get("metadata", {})


def save_pair(path, pair, discriminative=False, metadata=None, standardizer=None):
    doc = {
        "format": HMM_FORMAT,
        "kind": "pair",
        "log_priors": _arr(pair.log_priors),
        "models": [model_to_dict(m) for m in pair.models],
        "discriminative": bool(discriminative),
        "metadata": metadata or {},
        "standardizer": _standardizer_to_dict(standardizer),
    }
    _dump(path, doc)


def load_pair(path):
    """Returns (pair, info dict with discriminative/metadata/standardizer)."""
    doc = _load(path, HMM_FORMAT)
    if doc.get("kind") != "pair":
        raise ContractError(f"{path} holds a {doc.get('kind')}, not a pair")
    pair = ClassifierPair(
        [model_from_dict(m) for m in doc["models"]],
        np.asarray(doc["log_priors"], dtype=float),
    )
    info = {
        "discriminative": bool(doc.get("discriminative", False)),
        "metadata": doc.get("metadata", {}),
        "standardizer": _standardizer_from_dict(doc.get("standardizer")),
    }
    return pair, info


def save_baseline(path, model, metadata=None, standardizer=None):
    if isinstance(model, LogisticModel):
        payload = {
            "kind": "logreg",
            "weights": _arr(model.weights),
            "bias": model.bias,
            "lam": model.lam,
        }
    elif isinstance(model, ElmModel):
        payload = {
            "kind": "elm",
            "hidden_weights": _arr(model.hidden_weights),
            "hidden_bias": _arr(model.hidden_bias),
            "readout_weights": _arr(model.readout_weights),
            "readout_bias": model.readout_bias,
            "ridge": model.ridge,
        }
    else:
        raise ContractError(f"cannot serialize baseline type {type(model).__name__}")
    doc = {
        "format": BASELINE_FORMAT,
        "metadata": metadata or {},
        "standardizer": _standardizer_to_dict(standardizer),
        **payload,
    }
    _dump(path, doc)


def load_baseline(path):
    """Returns (model, info dict with metadata/standardizer)."""
    doc = _load(path, BASELINE_FORMAT)
    kind = doc.get("kind")
    if kind == "logreg":
        model = LogisticModel(
            np.asarray(doc["weights"], dtype=float),
            float(doc["bias"]),
            float(doc["lam"]),
        )
    elif kind == "elm":
        model = ElmModel(
            np.asarray(doc["hidden_weights"], dtype=float),
            np.asarray(doc["hidden_bias"], dtype=float),
            np.asarray(doc["readout_weights"], dtype=float),
            float(doc["readout_bias"]),
            float(doc["ridge"]),
        )
    else:
        raise ContractError(f"unknown baseline kind {kind!r}")
    info = {
        "metadata": doc.get("metadata", {}),
        "standardizer": _standardizer_from_dict(doc.get("standardizer")),
    }
    return model, info


def _dump(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def _load(path, expected_format):
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != expected_format:
        raise ContractError(
            f"{path}: format {doc.get('format')!r}, expected {expected_format!r}"
        )
    return doc
