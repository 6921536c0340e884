"""Single-hidden-layer perceptron with sigmoid hidden units and a softmax
output, trained by minibatch SGD on cross-entropy."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset, EmptyDataset


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def forward(params, X):
    W1, b1, W2, b2 = params
    h = sigmoid(X @ W1 + b1)
    return h, softmax(h @ W2 + b2)


def loss(params, X, Y) -> float:
    """Mean cross-entropy; ``Y`` is one-hot."""
    _, p = forward(params, X)
    return float(-(Y * np.log(np.clip(p, 1e-300, None))).sum() / len(X))


def gradients(params, X, Y):
    W1, b1, W2, b2 = params
    h, p = forward(params, X)
    n = len(X)
    d_out = (p - Y) / n
    gW2 = h.T @ d_out
    gb2 = d_out.sum(axis=0)
    d_h = (d_out @ W2.T) * h * (1.0 - h)
    gW1 = X.T @ d_h
    gb1 = d_h.sum(axis=0)
    return gW1, gb1, gW2, gb2


@dataclass
class MlpModel:
    class_set: tuple
    attribute_names: tuple
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    impute: np.ndarray
    mean: np.ndarray
    scale: np.ndarray
    params: dict = field(default_factory=dict)

    kind = "mlp"

    def _prepare(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float)).copy()
        miss = np.isnan(X)
        if miss.any():
            X[miss] = np.broadcast_to(self.impute, X.shape)[miss]
        return (X - self.mean) / self.scale

    def predict_proba(self, X) -> np.ndarray:
        _, p = forward((self.W1, self.b1, self.W2, self.b2), self._prepare(X))
        return p

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)

    def to_dict(self) -> dict:
        return {
            "params": self.params,
            "W1": self.W1.tolist(), "b1": self.b1.tolist(), "W2": self.W2.tolist(), "b2": self.b2.tolist(),
            "impute": self.impute.tolist(), "mean": self.mean.tolist(), "scale": self.scale.tolist(),
        }

    @classmethod
    def from_dict(cls, d, class_set, attribute_names) -> "MlpModel":
        a = {k: np.asarray(d[k], dtype=float) for k in ("W1", "b1", "W2", "b2", "impute", "mean", "scale")}
        return cls(tuple(class_set), tuple(attribute_names), params=dict(d.get("params", {})), **a)


def train_mlp(data: Dataset, hidden_units: int = 8, epochs: int = 200, learning_rate: float = 0.3,
              rng_seed: int = 0, batch_size: int = 16) -> MlpModel:
    """Missing values are imputed with the training mean, then every attribute
    is standardized on the training data."""
    if len(data) == 0:
        raise EmptyDataset("cannot train on an empty dataset")
    rng = np.random.default_rng(rng_seed)
    X = data.X.copy()
    impute = np.array([np.nanmean(c) if (~np.isnan(c)).any() else 0.0 for c in X.T])
    miss = np.isnan(X)
    X[miss] = np.broadcast_to(impute, X.shape)[miss]
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    Xs = (X - mean) / scale
    n_in, n_out = X.shape[1], data.n_classes
    Y = np.eye(n_out)[data.y]
    W1 = rng.normal(0.0, 1.0 / np.sqrt(n_in), (n_in, hidden_units))
    b1 = np.zeros(hidden_units)
    W2 = rng.normal(0.0, 1.0 / np.sqrt(hidden_units), (hidden_units, n_out))
    b2 = np.zeros(n_out)
    params = [W1, b1, W2, b2]
    n = len(Xs)
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            b = order[start:start + batch_size]
            for p, g in zip(params, gradients(params, Xs[b], Y[b])):
                p -= learning_rate * g
    return MlpModel(data.class_set, data.attribute_names, W1, b1, W2, b2, impute, mean, scale,
                    {"hidden_units": int(hidden_units), "epochs": int(epochs),
                     "learning_rate": float(learning_rate), "rng_seed": int(rng_seed),
                     "batch_size": int(batch_size)})
