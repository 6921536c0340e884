"""Cross-validation, attribute merit, grid tuning and confusion matrices."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .dataset import Dataset
from .tree import entropy


class TooFewInstances(ValueError):
    pass


@dataclass
class ConfusionMatrix:
    """Rows are the true class, columns the predicted class."""

    class_set: tuple
    counts: np.ndarray

    @classmethod
    def empty(cls, class_set) -> "ConfusionMatrix":
        return cls(tuple(class_set), np.zeros((len(class_set), len(class_set)), dtype=np.int64))

    def add(self, truth, predicted) -> None:
        np.add.at(self.counts, (np.asarray(truth), np.asarray(predicted)), 1)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts)) / self.total if self.total else 0.0

    def row_fractions(self) -> np.ndarray:
        rows = self.counts.sum(axis=1, keepdims=True)
        return np.divide(self.counts, rows, out=np.zeros(self.counts.shape), where=rows > 0)

    def format(self) -> str:
        width = max(9, *(len(c) for c in self.class_set)) + 1
        lines = ["truth\\pred".ljust(width) + "".join(c.rjust(width) for c in self.class_set)]
        for name, row in zip(self.class_set, self.counts):
            lines.append(name.ljust(width) + "".join(str(int(v)).rjust(width) for v in row))
        lines.append(f"accuracy {self.accuracy:.4f}")
        return "\n".join(lines)


def predict(model, attributes):
    """Class name and per-class scores for a single attribute vector."""
    x = attributes.as_array() if hasattr(attributes, "as_array") else np.asarray(attributes, dtype=float)
    scores = model.predict_proba(x.reshape(1, -1))[0]
    if model.kind == "forest":
        idx = int(model.predict(x.reshape(1, -1))[0])
    else:
        idx = int(np.argmax(scores))
    return model.class_set[idx], scores


def stratified_folds(y, k: int, rng_seed: int = 0) -> list:
    """Fold index arrays; each class is shuffled and dealt round-robin so
    per-class fold sizes differ by at most one."""
    rng = np.random.default_rng(rng_seed)
    folds = [[] for _ in range(k)]
    offset = 0
    for c in np.unique(y):
        members = rng.permutation(np.flatnonzero(y == c))
        for j, i in enumerate(members):
            folds[(offset + j) % k].append(i)
        offset += len(members)
    return [np.sort(np.asarray(f, dtype=np.int64)) for f in folds]


def cross_validate(data: Dataset, trainer: Callable, k: int = 10, rng_seed: int = 0, return_predictions: bool = False):
    """Pooled k-fold confusion matrix and accuracy. ``trainer`` maps a
    training Dataset to a model with ``predict``."""
    if len(data) < k:
        raise TooFewInstances(f"{len(data)} instances for {k} folds")
    cm = ConfusionMatrix.empty(data.class_set)
    pred = np.full(len(data), -1, dtype=np.int64)
    folds = stratified_folds(data.y, k, rng_seed)
    for test in folds:
        if len(test) == 0:
            continue
        train = np.setdiff1d(np.arange(len(data)), test, assume_unique=True)
        model = trainer(data.subset(train))
        pred[test] = model.predict(data.X[test])
    cm.add(data.y, pred)
    if return_predictions:
        return cm, cm.accuracy, pred
    return cm, cm.accuracy


def _binary_split_gain(x, y, w, n_classes) -> float:
    """Largest class-entropy reduction over single-threshold splits of the
    instances with a known value."""
    known = ~np.isnan(x)
    x, y, w = x[known], y[known], w[known]
    if len(x) < 2:
        return 0.0
    order = np.argsort(x, kind="stable")
    xs, ys, ws = x[order], y[order], w[order]
    onehot = np.zeros((len(xs), n_classes))
    onehot[np.arange(len(xs)), ys] = ws
    cum = np.cumsum(onehot, axis=0)
    total = cum[-1]
    h = entropy(total)
    boundary = np.flatnonzero(xs[1:] > xs[:-1])
    if len(boundary) == 0:
        return 0.0
    W = total.sum()
    best = 0.0
    for i in boundary:
        left = cum[i]
        right = total - left
        cond = (left.sum() * entropy(left) + right.sum() * entropy(right)) / W
        best = max(best, h - cond)
    return best


@dataclass
class MeritReport:
    attribute_names: tuple
    scores: np.ndarray

    def ranked(self) -> list:
        order = sorted(range(len(self.scores)), key=lambda i: (-self.scores[i], i))
        return [(self.attribute_names[i], float(self.scores[i])) for i in order]

    def format(self) -> str:
        return "\n".join(f"{name}\t{score:.6f}" for name, score in self.ranked())


def info_gain_merit(data: Dataset, k: int = 10, rng_seed: int = 0) -> MeritReport:
    n_attrs = data.X.shape[1]
    if k <= 1 or len(data) < k:
        # too small to fold: score the whole dataset once
        portions = [np.arange(len(data))]
    else:
        folds = stratified_folds(data.y, k, rng_seed)
        portions = [np.setdiff1d(np.arange(len(data)), f, assume_unique=True) for f in folds]
    scores = np.zeros(n_attrs)
    for train in portions:
        for a in range(n_attrs):
            scores[a] += _binary_split_gain(data.X[train, a], data.y[train], data.w[train], data.n_classes)
    return MeritReport(data.attribute_names, np.maximum(scores / len(portions), 0.0))


def expand_grid(grid: dict) -> list:
    names = list(grid)
    return [dict(zip(names, values)) for values in itertools.product(*(grid[n] for n in names))]


def tune_grid(data: Dataset, make_trainer: Callable, grid: dict, k: int = 10, rng_seed: int = 0) -> list:
    """(params, accuracy) rows, best first; ties keep grid order."""
    points = expand_grid(grid)
    if not points:
        raise ValueError("empty grid")
    rows = []
    for params in points:
        _, acc = cross_validate(data, make_trainer(**params), k, rng_seed)
        rows.append((params, acc))
    return sorted(rows, key=lambda r: -r[1])


def format_grid(rows) -> str:
    return "\n".join(",".join(f"{k}={v}" for k, v in p.items()) + f" accuracy={acc:.4f}" for p, acc in rows)
