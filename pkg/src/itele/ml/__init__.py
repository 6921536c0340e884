"""From-scratch learners for the video identifier and resolution classifier."""

from __future__ import annotations

import hashlib
import json
from functools import partial

from .dataset import (
    IDENTIFIER_CLASSES, RESOLUTION_CLASSES, Dataset, DatasetFormatError, EmptyDataset,
    read_dataset, write_dataset,
)
from .evaluate import (
    ConfusionMatrix, MeritReport, TooFewInstances, cross_validate, expand_grid, format_grid,
    info_gain_merit, predict, stratified_folds, tune_grid,
)
from .forest import ForestModel, train_forest
from .mlp import MlpModel, train_mlp
from .tree import TreeModel, train_tree

MODEL_FORMAT = "itele-model/1"

_KINDS = {"tree": TreeModel, "forest": ForestModel, "mlp": MlpModel}

# operating points for the broker's two machines
IDENTIFIER_DEFAULTS = {"n_trees": 100, "max_depth": 9, "attrs_per_split": 1}
RESOLUTION_DEFAULTS = {"n_trees": 100, "max_depth": 5, "attrs_per_split": 3}

# short CLI/grid names -> trainer keyword names
_ALIASES = {
    "tree": {"depth": "max_depth", "leaf": "min_leaf", "min_leaf": "min_leaf", "max_depth": "max_depth",
             "rule": "rule"},
    "forest": {"depth": "max_depth", "attrs": "attrs_per_split", "trees": "n_trees", "max_depth": "max_depth",
               "attrs_per_split": "attrs_per_split", "n_trees": "n_trees", "min_leaf": "min_leaf",
               "bootstrap": "bootstrap", "rule": "rule"},
    "mlp": {"hidden": "hidden_units", "hidden_units": "hidden_units", "epochs": "epochs",
            "lr": "learning_rate", "learning_rate": "learning_rate", "batch_size": "batch_size"},
}
_TRAINERS = {"tree": train_tree, "forest": train_forest, "mlp": train_mlp}


def make_trainer(algorithm: str, rng_seed: int = 0, **params):
    """Dataset -> model callable with normalized parameter names."""
    if algorithm not in _TRAINERS:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    aliases = _ALIASES[algorithm]
    kwargs = {}
    for name, value in params.items():
        if name not in aliases:
            raise ValueError(f"unknown parameter {name!r} for {algorithm}")
        kwargs[aliases[name]] = value
    return partial(_TRAINERS[algorithm], rng_seed=rng_seed, **kwargs)


def model_to_dict(model) -> dict:
    return {
        "format": MODEL_FORMAT,
        "kind": model.kind,
        "class_set": list(model.class_set),
        "attribute_names": list(model.attribute_names),
        "model": model.to_dict(),
    }


def model_from_dict(d: dict):
    if d.get("format") != MODEL_FORMAT:
        raise ValueError(f"unsupported model format {d.get('format')!r}")
    return _KINDS[d["kind"]].from_dict(d["model"], d["class_set"], d["attribute_names"])


def dumps_model(model) -> str:
    return json.dumps(model_to_dict(model), sort_keys=True, separators=(",", ":"))


def save_model(model, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_model(model))


def load_model(path):
    with open(path) as fh:
        return model_from_dict(json.load(fh))


def model_hash(model) -> str:
    return hashlib.sha256(dumps_model(model).encode()).hexdigest()
