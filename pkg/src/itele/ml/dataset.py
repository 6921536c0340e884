from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from ..features import ATTRIBUTE_NAMES

MISSING = "?"
IDENTIFIER_CLASSES = ("video", "nonvideo")
RESOLUTION_CLASSES = ("low", "medium", "high", "ultrahigh")


class EmptyDataset(ValueError):
    pass


class DatasetFormatError(ValueError):
    pass


@dataclass
class Dataset:
    """Instances as arrays: ``X`` (n x attrs, NaN = missing), ``y`` class
    indices into ``class_set``, ``w`` instance weights. ``window`` and
    ``flow`` are optional per-instance annotations (sub-profile window label
    and source flow id)."""

    X: np.ndarray
    y: np.ndarray
    class_set: tuple
    attribute_names: tuple = ATTRIBUTE_NAMES
    w: np.ndarray | None = None
    window: np.ndarray | None = None
    flow: np.ndarray | None = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float).reshape(len(self.y), -1) if len(self.y) else np.zeros((0, len(self.attribute_names)))
        self.y = np.asarray(self.y, dtype=np.int64)
        self.class_set = tuple(self.class_set)
        self.attribute_names = tuple(self.attribute_names)
        if self.w is None:
            self.w = np.ones(len(self.y))
        self.w = np.asarray(self.w, dtype=float)
        if self.X.shape[1] != len(self.attribute_names):
            raise ValueError("attribute count mismatch")
        if len(self.y) and (self.y.min() < 0 or self.y.max() >= len(self.class_set)):
            raise ValueError("label outside class set")
        if (self.w <= 0).any():
            raise ValueError("instance weights must be positive")

    def __len__(self):
        return len(self.y)

    @property
    def n_classes(self) -> int:
        return len(self.class_set)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(
            self.X[idx], self.y[idx], self.class_set, self.attribute_names, self.w[idx],
            None if self.window is None else self.window[idx],
            None if self.flow is None else self.flow[idx],
        )

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.y, minlength=self.n_classes)

    @classmethod
    def from_rows(cls, rows, labels, class_set, window=None, flow=None, attribute_names=ATTRIBUTE_NAMES):
        X = np.array([[np.nan if v is None else v for v in r] for r in rows], dtype=float)
        index = {c: i for i, c in enumerate(class_set)}
        y = np.array([index[l] for l in labels], dtype=np.int64)
        return cls(
            X.reshape(len(y), len(attribute_names)), y, tuple(class_set), tuple(attribute_names),
            window=None if window is None else np.asarray(window, dtype=object),
            flow=None if flow is None else np.asarray(flow),
        )


def _fmt(v: float) -> str:
    return MISSING if np.isnan(v) else repr(float(v))


def write_dataset(data: Dataset, path_or_file) -> None:
    header = list(data.attribute_names) + ["label"]
    if data.window is not None:
        header.append("window")
    if data.flow is not None:
        header.append("flow")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for i in range(len(data)):
        row = [_fmt(v) for v in data.X[i]] + [data.class_set[data.y[i]]]
        if data.window is not None:
            row.append(data.window[i])
        if data.flow is not None:
            row.append(int(data.flow[i]))
        w.writerow(row)
    if hasattr(path_or_file, "write"):
        path_or_file.write(buf.getvalue())
    else:
        with open(path_or_file, "w", newline="") as fh:
            fh.write(buf.getvalue())


def read_dataset(path, class_set=None) -> Dataset:
    """Read a dataset file. The class set is inferred from the labels when not
    given: the identifier or resolution ordering if the labels fit one of
    them, otherwise sorted label names."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetFormatError(f"{path}: empty file") from None
        if "label" not in header:
            raise DatasetFormatError(f"{path}: header lacks 'label' column")
        li = header.index("label")
        wi = header.index("window") if "window" in header else None
        fi = header.index("flow") if "flow" in header else None
        attr_idx = [i for i, h in enumerate(header) if h not in ("label", "window", "flow")]
        rows, labels, windows, flows = [], [], [], []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(header):
                raise DatasetFormatError(f"{path}:{lineno}: expected {len(header)} fields")
            try:
                rows.append([np.nan if rec[i] == MISSING else float(rec[i]) for i in attr_idx])
            except ValueError as exc:
                raise DatasetFormatError(f"{path}:{lineno}: {exc}") from None
            labels.append(rec[li])
            if wi is not None:
                windows.append(rec[wi])
            if fi is not None:
                flows.append(int(rec[fi]))
    if class_set is None:
        found = set(labels)
        for candidate in (IDENTIFIER_CLASSES, RESOLUTION_CLASSES):
            if found <= set(candidate):
                class_set = candidate
                break
        else:
            class_set = tuple(sorted(found))
    unknown = set(labels) - set(class_set)
    if unknown:
        raise DatasetFormatError(f"{path}: labels outside class set: {sorted(unknown)}")
    index = {c: i for i, c in enumerate(class_set)}
    names = tuple(header[i] for i in attr_idx)
    return Dataset(
        np.array(rows, dtype=float).reshape(len(labels), len(names)),
        np.array([index[l] for l in labels], dtype=np.int64),
        tuple(class_set), names,
        window=np.array(windows, dtype=object) if wi is not None else None,
        flow=np.array(flows) if fi is not None else None,
    )
