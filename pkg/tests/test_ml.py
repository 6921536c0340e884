import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from itele import ml
from itele.features import ATTRIBUTE_NAMES
from itele.ml import Dataset, EmptyDataset, TooFewInstances
from itele.ml.forest import ForestModel
from itele.ml.mlp import gradients, loss
from itele.ml.tree import TreeModel, best_split, grow_tree

CLS2 = ("video", "nonvideo")


def ds(X, y, class_set=CLS2, names=None):
    X = np.asarray(X, dtype=float)
    names = names or tuple(f"a{i}" for i in range(X.shape[1]))
    return Dataset(X, np.asarray(y), class_set, names)


# exhaustive oracle, plain Python

def H(counts):
    t = sum(counts)
    return -sum(c / t * math.log2(c / t) for c in counts if c > 0) if t else 0.0


def oracle_candidates(X, y, n_classes):
    """Every (attribute, threshold, gain, gain_ratio) on complete data."""
    n = len(y)
    parent = H([sum(1 for v in y if v == c) for c in range(n_classes)])
    out = []
    for a in range(len(X[0])):
        vals = sorted(set(row[a] for row in X))
        for lo, hi in zip(vals, vals[1:]):
            thr = (lo + hi) / 2
            left = [y[i] for i in range(n) if X[i][a] <= thr]
            right = [y[i] for i in range(n) if X[i][a] > thr]
            cl = [left.count(c) for c in range(n_classes)]
            cr = [right.count(c) for c in range(n_classes)]
            gain = parent - (len(left) * H(cl) + len(right) * H(cr)) / n
            si = H([len(left), len(right)])
            ratio = gain / si if gain > 1e-12 else -math.inf
            out.append((a, thr, gain, ratio))
    return out


small = st.integers(2, 10).flatmap(lambda n: st.tuples(
    st.lists(st.lists(st.integers(0, 6), min_size=3, max_size=3), min_size=n, max_size=n),
    st.lists(st.integers(0, 2), min_size=n, max_size=n)))


@settings(max_examples=400, deadline=None)
@given(small)
def test_split_matches_exhaustive_oracle(data):
    Xl, yl = data
    X, y = np.array(Xl, dtype=float), np.array(yl)
    cands = [c for c in oracle_candidates(Xl, yl, 3) if c[3] > -math.inf]
    for rule in ("ratio", "c45"):
        s = best_split(X, y, np.ones(len(y)), 3, range(3), 1.0, rule)
        if not cands:
            assert s is None
            continue
        if rule == "ratio":
            pool = cands
        else:  # each attribute contributes its max-gain threshold
            pool = []
            for a in range(3):
                mine = [c for c in cands if c[0] == a]
                if mine:
                    g = max(c[2] for c in mine)
                    pool.append(min((c for c in mine if c[2] >= g - 1e-12), key=lambda c: c[1]))
        best = max(c[3] for c in pool)
        assert s.gain_ratio == pytest.approx(best, rel=1e-9)
        winners = [c for c in pool if c[3] >= best - 1e-9]
        if len(winners) == 1:
            assert (s.attribute, s.threshold) == winners[0][:2]
        if rule == "ratio":
            # chosen split dominates every rejected candidate
            assert all(s.gain_ratio >= c[3] - 1e-9 for c in cands)


def test_hand_dataset_root_attribute():
    # a0 separates perfectly; a1 and a2 are partially informative
    X = [[1, 5, 0], [2, 1, 0], [3, 6, 1], [4, 2, 1], [5, 7, 0], [6, 3, 1], [7, 8, 0], [8, 4, 1]]
    y = [0, 0, 0, 0, 1, 1, 1, 1]
    best = max(oracle_candidates(X, y, 2), key=lambda c: c[3])
    t = ml.train_tree(ds(X, y), min_leaf=1)
    assert (t.feature[0], t.threshold[0]) == (best[0], best[1]) == (0, 4.5)


def test_tree_trivial_cases():
    t = ml.train_tree(ds([[1.0], [2.0], [3.0]], [1, 1, 1]))
    assert t.n_nodes == 1 and list(t.predict([[9.0]])) == [1]
    t = ml.train_tree(ds([[0.0], [1.0]], [0, 1]), min_leaf=1)
    assert t.depth() == 1 and list(t.predict([[0.0], [1.0]])) == [0, 1]
    with pytest.raises(EmptyDataset):
        ml.train_tree(ds(np.zeros((0, 1)), []))


def hand_tree():
    t = TreeModel(CLS2, ATTRIBUTE_NAMES)
    root = t._add([9, 11])
    t.feature[root], t.threshold[root], t.frac_left[root] = 6, 0.5, 0.5  # splits on cv16
    t.left[root] = t._add([9, 1])
    t.right[root] = t._add([0, 10])
    return t


def test_leaf_scores_and_fractional_descent():
    t = hand_tree()
    name, scores = ml.predict(t, [0.1, 1e6, 1.0, 1.0, 1.0, 0.2, 0.3])
    assert name == "video" and scores == pytest.approx([0.9, 0.1])
    name, scores = ml.predict(t, [0.1, 1e6, 1.0, 1.0, 1.0, None, None])
    assert scores == pytest.approx([0.45, 0.55]) and sum(scores) == pytest.approx(1.0)
    assert name == "nonvideo"


def test_predict_tie_goes_to_class_order():
    t = TreeModel(CLS2, ("a",))
    t._add([5, 5])
    assert ml.predict(t, [1.0])[0] == "video"


def test_forest_majority_vote():
    def leaf(c):
        t = TreeModel(CLS2, ("a",))
        t._add([1, 0] if c == 0 else [0, 1])
        return t
    f = ForestModel(CLS2, ("a",), [leaf(0), leaf(0), leaf(1)])
    assert ml.predict(f, [0.0])[0] == "video"
    tie = ForestModel(CLS2, ("a",), [leaf(1), leaf(0)])
    assert ml.predict(tie, [0.0])[0] == "video"


@settings(max_examples=150, deadline=None)
@given(st.integers(5, 60), st.integers(0, 10_000), st.floats(0, 0.5))
def test_property_leaf_weight_conservation(n, seed, miss_rate):
    r = np.random.default_rng(seed)
    X = r.normal(size=(n, 4))
    X[r.random((n, 4)) < miss_rate] = np.nan
    y = r.integers(0, 3, n)
    w = r.uniform(0.5, 2.0, n)
    t = grow_tree(X, y, w, ("a", "b", "c"), ("p", "q", "r", "s"), min_leaf=1)
    leaf_total = sum(sum(t.value[i]) for i in t.leaves())
    assert leaf_total == pytest.approx(w.sum(), abs=1e-9)
    p = t.predict_proba(X)
    assert np.allclose(p.sum(axis=1), 1.0, atol=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.integers(8, 60), st.integers(0, 10_000))
def test_property_degenerate_forest_equals_tree(n, seed):
    r = np.random.default_rng(seed)
    X = r.normal(size=(n, 7))
    X[r.random((n, 7)) < 0.1] = np.nan
    data = Dataset(X, r.integers(0, 2, n), CLS2)
    tree = ml.train_tree(data, min_leaf=1, max_depth=4)
    forest = ml.train_forest(data, n_trees=1, max_depth=4, attrs_per_split=7, bootstrap=False, min_leaf=1)
    probe = r.normal(size=(50, 7))
    probe[r.random((50, 7)) < 0.2] = np.nan
    np.testing.assert_array_equal(tree.predict(probe), forest.predict(probe))


def blobs(n=200, seed=0, classes=CLS2):
    r = np.random.default_rng(seed)
    y = np.arange(n) % len(classes)
    X = r.normal(size=(n, 7)) + y[:, None] * 3.0
    return Dataset(X, y, classes)


def test_forest_determinism_and_serialization(tmp_path):
    data = blobs()
    a = ml.train_forest(data, n_trees=5, max_depth=4, attrs_per_split=2, rng_seed=3)
    b = ml.train_forest(data, n_trees=5, max_depth=4, attrs_per_split=2, rng_seed=3)
    assert ml.model_hash(a) == ml.model_hash(b)
    ml.save_model(a, tmp_path / "m.json")
    c = ml.load_model(tmp_path / "m.json")
    assert ml.model_hash(c) == ml.model_hash(a)
    np.testing.assert_array_equal(c.predict(data.X), a.predict(data.X))
    assert ml.model_hash(ml.train_forest(data, n_trees=5, max_depth=4, attrs_per_split=2, rng_seed=4)) != ml.model_hash(a)
    with pytest.raises(ValueError):
        ml.train_forest(data, attrs_per_split=8)


def test_mlp_gradient_matches_finite_differences():
    r = np.random.default_rng(0)
    X = r.normal(size=(5, 7))
    Y = np.eye(3)[r.integers(0, 3, 5)]
    params = [r.normal(size=(7, 4)), r.normal(size=4), r.normal(size=(4, 3)), r.normal(size=3)]
    analytic = gradients(params, X, Y)
    eps = 1e-6
    for p, g in zip(params, analytic):
        num = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + eps
            up = loss(params, X, Y)
            p[idx] = old - eps
            down = loss(params, X, Y)
            p[idx] = old
            num[idx] = (up - down) / (2 * eps)
        rel = np.linalg.norm(num - g) / max(np.linalg.norm(num) + np.linalg.norm(g), 1e-12)
        assert rel < 1e-4


def test_mlp_separable_determinism_and_probabilities():
    data = blobs(200, seed=1)
    data.X[::7, 5] = np.nan
    m = ml.train_mlp(data, hidden_units=8, epochs=200, rng_seed=5)
    assert (m.predict(data.X) == data.y).mean() >= 0.99
    m2 = ml.train_mlp(data, hidden_units=8, epochs=200, rng_seed=5)
    assert ml.model_hash(m) == ml.model_hash(m2)
    p = m.predict_proba(np.random.default_rng(2).normal(size=(30, 7)) * 100)
    assert (p >= 0).all() and np.allclose(p.sum(axis=1), 1.0, atol=1e-9)


def test_cross_validate_examples():
    r = np.random.default_rng(0)
    y = r.integers(0, 2, 300)
    leak = Dataset(np.column_stack([y, r.normal(size=(300, 6))]), y, CLS2)
    cm, acc = ml.cross_validate(leak, ml.make_trainer("tree"), 10)
    assert acc == 1.0 and cm.total == 300
    assert acc == np.trace(cm.counts) / cm.total
    # shuffled labels: no better than the majority class
    yy = np.r_[np.zeros(180, int), np.ones(120, int)]
    noise = Dataset(r.normal(size=(300, 7)), r.permutation(yy), CLS2)
    _, acc = ml.cross_validate(noise, ml.make_trainer("forest", n_trees=10, depth=3), 10)
    assert abs(acc - 0.6) <= 0.05 or acc < 0.6
    with pytest.raises(TooFewInstances):
        ml.cross_validate(leak.subset(np.arange(5)), ml.make_trainer("tree"), 10)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 3), min_size=10, max_size=300), st.integers(2, 10), st.integers(0, 99))
def test_property_stratified_folds(labels, k, seed):
    y = np.array(labels)
    folds = ml.stratified_folds(y, k, seed)
    assert len(folds) == k
    assert sorted(np.concatenate(folds).tolist()) == list(range(len(y)))
    for c in np.unique(y):
        sizes = [int((y[f] == c).sum()) for f in folds]
        assert max(sizes) - min(sizes) <= 1
    again = ml.stratified_folds(y, k, seed)
    assert all((a == b).all() for a, b in zip(folds, again))


def test_merit_examples():
    y = np.array([0, 0, 0, 1, 1, 1, 1, 0])
    X = np.column_stack([y, np.full(8, 3.0), [1, 2, 3, 4, 5, 6, 7, 8]])
    rep = ml.info_gain_merit(Dataset(X, y, CLS2, ("copy", "const", "ramp")), k=1)
    scores = dict(rep.ranked())
    assert scores["copy"] == pytest.approx(H([4, 4]), abs=1e-12)
    assert scores["const"] == 0.0
    # ramp: best single cut, computed by hand over all 7 cuts
    hand = max(H([4, 4]) - (i * H([y[:i].tolist().count(0), y[:i].tolist().count(1)])
                            + (8 - i) * H([y[i:].tolist().count(0), y[i:].tolist().count(1)])) / 8
               for i in range(1, 8))
    assert scores["ramp"] == pytest.approx(hand, abs=1e-9)
    assert rep.ranked()[0][0] == "copy"


def test_grid_single_point_and_shape():
    data = blobs(60)
    rows = ml.tune_grid(data, lambda **p: ml.make_trainer("tree", **p), {"depth": [2]}, 5, 0)
    _, acc = ml.cross_validate(data, ml.make_trainer("tree", depth=2), 5, 0)
    assert rows == [({"depth": 2}, acc)]
    grid = {"depth": list(range(1, 13)), "attrs": list(range(1, 7))}
    assert len(ml.expand_grid(grid)) == 72
    text = ml.format_grid([({"depth": 1, "attrs": 2}, 0.91234)])
    assert text == "depth=1,attrs=2 accuracy=0.9123"


def test_tree_min_leaf_grid_interior_maximum():
    """Label noise makes tiny leaves overfit and huge leaves underfit."""
    r = np.random.default_rng(7)
    n = 400
    X = r.uniform(0, 1, (n, 7))
    y = ((X[:, 0] + 0.5 * X[:, 1]) > 0.75).astype(int)
    flip = r.random(n) < 0.2
    y[flip] = 1 - y[flip]
    data = Dataset(X, y, CLS2)
    rows = dict((p["leaf"], a) for p, a in ml.tune_grid(
        data, lambda **p: ml.make_trainer("tree", **p), {"leaf": [1, 2, 4, 8, 16, 64, 200]}, 10, 0))
    best = max(rows, key=rows.get)
    assert best not in (1, 200)


def test_make_trainer_rejects_unknown_param():
    with pytest.raises(ValueError):
        ml.make_trainer("forest", bogus=1)
    with pytest.raises(ValueError):
        ml.make_trainer("svm")


def test_dataset_io_roundtrip(tmp_path):
    data = Dataset.from_rows([[0.1, 2.0, None, 1, 1, None, None], [0.5, 3.0, 0.2, 0.1, 0.1, 0.1, 0.1]],
                             ["video", "nonvideo"], CLS2, window=["1-16", "65-128"], flow=[1, 2])
    ml.write_dataset(data, tmp_path / "d.csv")
    text = (tmp_path / "d.csv").read_text()
    assert "?" in text.splitlines()[1]
    back = ml.read_dataset(tmp_path / "d.csv")
    np.testing.assert_array_equal(np.isnan(back.X), np.isnan(data.X))
    np.testing.assert_array_equal(np.nan_to_num(back.X), np.nan_to_num(data.X))
    assert back.class_set == CLS2 and list(back.window) == ["1-16", "65-128"]
    (tmp_path / "bad.csv").write_text("x,y\n1,2\n")
    with pytest.raises(ml.DatasetFormatError):
        ml.read_dataset(tmp_path / "bad.csv")
