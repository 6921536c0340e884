from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset, EmptyDataset
from .tree import TreeModel, grow_tree


@dataclass
class ForestModel:
    class_set: tuple
    attribute_names: tuple
    trees: list = field(default_factory=list)
    params: dict = field(default_factory=dict)

    kind = "forest"

    def votes(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        counts = np.zeros((len(X), len(self.class_set)))
        rows = np.arange(len(X))
        for tree in self.trees:
            counts[rows, tree.predict(X)] += 1
        return counts

    def predict_proba(self, X) -> np.ndarray:
        """Vote fractions."""
        return self.votes(X) / len(self.trees)

    def predict(self, X) -> np.ndarray:
        # argmax returns the first maximum: ties go to class order
        return np.argmax(self.votes(X), axis=1)

    def to_dict(self) -> dict:
        return {"params": self.params, "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, d, class_set, attribute_names) -> "ForestModel":
        trees = [TreeModel.from_dict(t, class_set, attribute_names) for t in d["trees"]]
        return cls(tuple(class_set), tuple(attribute_names), trees, dict(d.get("params", {})))


def train_forest(data: Dataset, n_trees: int = 100, max_depth: int = 0, attrs_per_split: int = 1,
                 rng_seed: int = 0, bootstrap: bool = True, min_leaf: int = 1, rule: str = "c45") -> ForestModel:
    """Bagged random-subspace trees. Tree ``i`` draws its bootstrap sample and
    its per-node attribute subsets from a generator seeded with
    ``rng_seed + i``."""
    if len(data) == 0:
        raise EmptyDataset("cannot train on an empty dataset")
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    n_attrs = data.X.shape[1]
    if not 1 <= attrs_per_split <= n_attrs:
        raise ValueError(f"attrs_per_split must be in [1, {n_attrs}]")
    n = len(data)
    trees = []
    for i in range(n_trees):
        rng = np.random.default_rng(rng_seed + i)
        if bootstrap:
            counts = np.bincount(rng.integers(0, n, n), minlength=n)
            keep = np.flatnonzero(counts)
            X, y, w = data.X[keep], data.y[keep], data.w[keep] * counts[keep]
        else:
            X, y, w = data.X, data.y, data.w
        trees.append(grow_tree(X, y, w, data.class_set, data.attribute_names, min_leaf=min_leaf,
                               max_depth=max_depth, attrs_per_split=attrs_per_split, rng=rng, rule=rule))
    params = {"n_trees": int(n_trees), "max_depth": int(max_depth), "attrs_per_split": int(attrs_per_split),
              "rng_seed": int(rng_seed), "bootstrap": bool(bootstrap), "min_leaf": int(min_leaf), "rule": rule}
    return ForestModel(data.class_set, data.attribute_names, trees, params)
