"""C4.5-style decision tree on numeric attributes.

Binary splits at midpoints between consecutive distinct values, chosen by
gain ratio. Instances missing the split attribute are routed down both
branches with their weight split in proportion to the known branch weights,
both during induction and at prediction time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset, EmptyDataset

_EPS = 1e-12


def entropy(counts) -> float:
    """Shannon entropy in bits of a (weighted) class-count vector."""
    c = np.asarray(counts, dtype=float)
    total = c.sum()
    if total <= 0:
        return 0.0
    p = c[c > 0] / total
    return float(-(p * np.log2(p)).sum())


def _entropy_rows(counts: np.ndarray, totals: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        p = counts / totals[:, None]
        logp = np.where(p > 0, np.log2(np.where(p > 0, p, 1.0)), 0.0)
    return -(p * logp).sum(axis=1)


@dataclass
class Split:
    attribute: int
    threshold: float
    gain: float
    gain_ratio: float


def best_split(X, y, w, n_classes, attributes, min_leaf=1.0, rule="c45") -> Split | None:
    """Best (attribute, threshold) over the candidate attributes.

    Gain is computed on instances with a known value and scaled by the known
    weight fraction; split information includes the unknown fraction as its
    own part. Both branches must carry at least ``min_leaf`` weight.

    ``rule="c45"`` picks each attribute's threshold by information gain and
    compares attributes by the gain ratio of that threshold (Quinlan's
    treatment of continuous attributes). ``rule="ratio"`` maximizes gain ratio
    jointly over every (attribute, threshold) pair. Ties go to the earlier
    attribute, then the lower threshold.
    """
    total_w = w.sum()
    best = None
    for a in attributes:
        x = X[:, a]
        known = ~np.isnan(x)
        if not known.all():
            xk, yk, wk = x[known], y[known], w[known]
        else:
            xk, yk, wk = x, y, w
        wk_total = wk.sum()
        if len(xk) < 2 or wk_total < 2 * min_leaf:
            continue
        order = np.argsort(xk, kind="stable")
        xs, ys, ws = xk[order], yk[order], wk[order]
        boundary = xs[1:] > xs[:-1]
        if not boundary.any():
            continue
        onehot = np.zeros((len(xs), n_classes))
        onehot[np.arange(len(xs)), ys] = ws
        cum = np.cumsum(onehot, axis=0)[:-1]
        cls_total = cum[-1] + onehot[-1]
        left_w = cum.sum(axis=1)
        right_w = wk_total - left_w
        ok = boundary & (left_w >= min_leaf - _EPS) & (right_w >= min_leaf - _EPS)
        if not ok.any():
            continue
        pos = np.flatnonzero(ok)
        lc, lw = cum[pos], left_w[pos]
        rc, rw = cls_total - lc, right_w[pos]
        rc = np.maximum(rc, 0.0)
        h_parent = entropy(cls_total)
        h_children = (lw * _entropy_rows(lc, lw) + rw * _entropy_rows(rc, rw)) / wk_total
        frac_known = wk_total / total_w
        gain = frac_known * (h_parent - h_children)
        parts = np.stack([lw / total_w, rw / total_w, np.full(len(pos), 1.0 - frac_known)], axis=1)
        split_info = _entropy_rows(parts, np.ones(len(pos)))
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where((gain > _EPS) & (split_info > _EPS), gain / split_info, -np.inf)
        if rule == "c45":
            j = int(np.argmax(np.where(np.isfinite(ratio), gain, -np.inf)))
        else:
            j = int(np.argmax(ratio))
        if not np.isfinite(ratio[j]):
            continue
        if best is None or ratio[j] > best.gain_ratio + _EPS:
            i = pos[j]
            best = Split(int(a), float((xs[i] + xs[i + 1]) / 2.0), float(gain[j]), float(ratio[j]))
    return best


@dataclass
class TreeModel:
    """Flat node arrays. Leaves have ``feature == -1``; ``value`` holds the
    weighted class distribution reaching each node."""

    class_set: tuple
    attribute_names: tuple
    feature: list = field(default_factory=list)
    threshold: list = field(default_factory=list)
    left: list = field(default_factory=list)
    right: list = field(default_factory=list)
    frac_left: list = field(default_factory=list)
    value: list = field(default_factory=list)
    params: dict = field(default_factory=dict)

    kind = "tree"

    def _add(self, dist) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.frac_left.append(0.0)
        self.value.append([float(v) for v in dist])
        return len(self.feature) - 1

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def leaves(self) -> list:
        return [i for i, f in enumerate(self.feature) if f < 0]

    def depth(self) -> int:
        def d(i):
            return 0 if self.feature[i] < 0 else 1 + max(d(self.left[i]), d(self.right[i]))
        return d(0)

    def predict_proba(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        n = len(X)
        out = np.zeros((n, len(self.class_set)))
        value = np.asarray(self.value)
        stack = [(0, np.arange(n), np.ones(n))]
        while stack:
            node, idx, wt = stack.pop()
            if len(idx) == 0:
                continue
            f = self.feature[node]
            if f < 0:
                dist = value[node]
                s = dist.sum()
                if s > 0:
                    out[idx] += wt[:, None] * (dist / s)[None, :]
                continue
            x = X[idx, f]
            miss = np.isnan(x)
            go_left = ~miss & (x <= self.threshold[node])
            go_right = ~miss & ~go_left
            fl = self.frac_left[node]
            li = np.concatenate([idx[go_left], idx[miss]])
            lw = np.concatenate([wt[go_left], wt[miss] * fl])
            ri = np.concatenate([idx[go_right], idx[miss]])
            rw = np.concatenate([wt[go_right], wt[miss] * (1.0 - fl)])
            stack.append((self.left[node], li, lw))
            stack.append((self.right[node], ri, rw))
        return out

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)

    def to_dict(self) -> dict:
        return {
            "feature": self.feature, "threshold": self.threshold, "left": self.left,
            "right": self.right, "frac_left": self.frac_left, "value": self.value,
            "params": self.params,
        }

    @classmethod
    def from_dict(cls, d, class_set, attribute_names) -> "TreeModel":
        return cls(tuple(class_set), tuple(attribute_names), list(d["feature"]), list(d["threshold"]),
                   list(d["left"]), list(d["right"]), list(d["frac_left"]),
                   [list(v) for v in d["value"]], dict(d.get("params", {})))


def grow_tree(X, y, w, class_set, attribute_names, min_leaf=1, max_depth=0, attrs_per_split=None, rng=None,
              rule="c45") -> TreeModel:
    """Top-down induction on weighted arrays. ``max_depth`` 0 means unbounded.
    With ``attrs_per_split`` set, each node draws that many candidate
    attributes uniformly without replacement from ``rng``."""
    n_classes = len(class_set)
    n_attrs = X.shape[1]
    model = TreeModel(tuple(class_set), tuple(attribute_names))
    all_attrs = np.arange(n_attrs)

    def build(idx, wt, depth) -> int:
        dist = np.bincount(y[idx], weights=wt, minlength=n_classes)
        node = model._add(dist)
        if np.count_nonzero(dist > _EPS) <= 1:
            return node
        if max_depth and depth >= max_depth:
            return node
        if wt.sum() < 2 * min_leaf:
            return node
        if attrs_per_split is not None and attrs_per_split < n_attrs:
            cand = np.sort(rng.choice(n_attrs, size=attrs_per_split, replace=False))
        else:
            cand = all_attrs
        split = best_split(X[idx], y[idx], wt, n_classes, cand, min_leaf, rule)
        if split is None:
            return node
        x = X[idx, split.attribute]
        miss = np.isnan(x)
        go_left = ~miss & (x <= split.threshold)
        go_right = ~miss & ~go_left
        lw, rw = wt[go_left].sum(), wt[go_right].sum()
        fl = lw / (lw + rw)
        li = np.concatenate([idx[go_left], idx[miss]])
        lwt = np.concatenate([wt[go_left], wt[miss] * fl])
        ri = np.concatenate([idx[go_right], idx[miss]])
        rwt = np.concatenate([wt[go_right], wt[miss] * (1.0 - fl)])
        model.feature[node] = split.attribute
        model.threshold[node] = split.threshold
        model.frac_left[node] = float(fl)
        model.left[node] = build(li, lwt, depth + 1)
        model.right[node] = build(ri, rwt, depth + 1)
        return node

    build(np.arange(len(y)), np.asarray(w, dtype=float).copy(), 0)
    return model


def train_tree(data: Dataset, min_leaf: int = 2, max_depth: int = 0, rng_seed: int = 0, rule: str = "c45") -> TreeModel:
    if len(data) == 0:
        raise EmptyDataset("cannot train on an empty dataset")
    if min_leaf < 1:
        raise ValueError("min_leaf must be >= 1")
    if rule not in ("c45", "ratio"):
        raise ValueError(f"unknown split rule {rule!r}")
    model = grow_tree(data.X, data.y, data.w, data.class_set, data.attribute_names,
                      min_leaf=min_leaf, max_depth=max_depth, rule=rule)
    model.params = {"min_leaf": int(min_leaf), "max_depth": int(max_depth), "rng_seed": int(rng_seed), "rule": rule}
    return model
