"""Dataset container, file ingestion, synthetic generators, splits and folds."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class DataError(ValueError):
    """Raised when input data cannot be parsed or fails validation."""


@dataclass(frozen=True)
class Dataset:
    """Dense binary-labelled sample set.

    ``labels`` are always in {+1, -1}. ``ids`` are stable identifiers that
    survive splitting, so partitions can be checked against the source.
    """

    features: np.ndarray
    labels: np.ndarray
    ids: np.ndarray = field(default=None)

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        y = np.asarray(self.labels, dtype=float).ravel()
        if X.shape[0] != y.shape[0]:
            raise DataError(f"{X.shape[0]} feature rows but {y.shape[0]} labels")
        if not np.all(np.isfinite(X)):
            raise DataError("non-finite feature values")
        if not np.all(np.isin(y, (-1.0, 1.0))):
            raise DataError("labels must be +1 or -1")
        ids = np.arange(len(y)) if self.ids is None else np.asarray(self.ids)
        if ids.shape != y.shape:
            raise DataError("ids must have one entry per sample")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "ids", ids)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def __len__(self):
        return self.n

    def subset(self, index) -> "Dataset":
        index = np.asarray(index)
        return Dataset(self.features[index], self.labels[index], self.ids[index])

    def with_labels(self, labels) -> "Dataset":
        return Dataset(self.features, labels, self.ids)

    def with_features(self, features) -> "Dataset":
        return Dataset(features, self.labels, self.ids)

    def class_counts(self) -> dict:
        return {1: int(np.sum(self.labels == 1)), -1: int(np.sum(self.labels == -1))}

    def require_both_classes(self):
        counts = self.class_counts()
        if counts[1] == 0 or counts[-1] == 0:
            raise DataError("both classes must be present")


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    folds: int = 5
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise DataError("train_fraction must lie in (0, 1)")
        if self.folds < 1:
            raise DataError("folds must be positive")


@dataclass(frozen=True)
class Scaler:
    mean: np.ndarray
    scale: np.ndarray

    def transform(self, ds: Dataset) -> Dataset:
        return ds.with_features((ds.features - self.mean) / self.scale)


# --- ingestion -------------------------------------------------------------

def canonical_labels(raw) -> np.ndarray:
    """Map any two-valued label vector onto {+1, -1}.

    {+1, -1} is kept as is; {0, 1} maps 1 -> +1; other pairs map the smaller
    value to +1 (so the common {1, 2} scheme becomes 1 -> +1, 2 -> -1).
    """
    raw = np.asarray(raw, dtype=float)
    values = np.unique(raw)
    if len(values) != 2:
        raise DataError(f"expected exactly two label values, found {values.tolist()}")
    lo, hi = values
    if (lo, hi) == (-1.0, 1.0) or (lo, hi) == (0.0, 1.0):
        return np.where(raw == hi, 1.0, -1.0)
    return np.where(raw == lo, 1.0, -1.0)


def _parse_libsvm(lines):
    labels, rows, width = [], [], 0
    for lineno, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        try:
            labels.append(float(tokens[0]))
            row = {}
            for tok in tokens[1:]:
                idx, val = tok.split(":", 1)
                idx = int(idx)
                if idx < 1:
                    raise ValueError("feature indices are 1-based")
                row[idx] = float(val)
        except ValueError as exc:
            raise DataError(f"line {lineno}: {exc}") from None
        if row:
            width = max(width, max(row))
        rows.append(row)
    X = np.zeros((len(rows), width))
    for r, row in enumerate(rows):
        for idx, val in row.items():
            X[r, idx - 1] = val
    return X, np.array(labels)


def _parse_csv(lines):
    labels, rows = [], []
    width = None
    for lineno, rec in enumerate(csv.reader(lines), start=1):
        if not rec or all(not c.strip() for c in rec):
            continue
        try:
            vals = [float(c) for c in rec]
        except ValueError as exc:
            raise DataError(f"line {lineno}: {exc}") from None
        if width is None:
            width = len(vals)
        elif len(vals) != width:
            raise DataError(f"line {lineno}: expected {width} columns, got {len(vals)}")
        if width < 2:
            raise DataError(f"line {lineno}: need at least one feature and a label")
        rows.append(vals[:-1])
        labels.append(vals[-1])
    return np.array(rows, dtype=float), np.array(labels)


def load_dataset(path, format: str = "libsvm") -> Dataset:
    """Read a libsvm or headerless CSV file (label in the last CSV column)."""
    path = Path(path)
    with path.open() as fh:
        lines = fh.read().splitlines()
    if format == "libsvm":
        X, raw = _parse_libsvm(lines)
    elif format == "csv":
        X, raw = _parse_csv(lines)
    else:
        raise DataError(f"unknown format {format!r}")
    if len(raw) < 2:
        raise DataError("need at least two samples")
    if len(np.unique(raw)) < 2:
        raise DataError("file contains a single class")
    return Dataset(X, canonical_labels(raw))


def save_dataset(ds: Dataset, path, format: str = "libsvm"):
    """Write ``ds`` so that :func:`load_dataset` reads back the same matrices."""
    path = Path(path)
    with path.open("w") as fh:
        for x, y in zip(ds.features, ds.labels):
            label = "+1" if y > 0 else "-1"
            if format == "libsvm":
                pairs = " ".join(f"{j + 1}:{float(v)!r}" for j, v in enumerate(x) if v != 0)
                # keep the width recoverable when trailing columns are zero
                if x.size and x[-1] == 0:
                    pairs = (pairs + f" {x.size}:0.0").strip()
                fh.write(f"{label} {pairs}\n".rstrip() + "\n")
            elif format == "csv":
                fh.write(",".join([repr(float(v)) for v in x] + [label]) + "\n")
            else:
                raise DataError(f"unknown format {format!r}")


def load_spec(spec: str, n: int = 200, noise: float = 0.3, seed: int = 0) -> Dataset:
    """Resolve a dataset spec string: ``synthetic:<kind>`` or a file path.

    The format of a file is inferred from its suffix (``.csv`` or libsvm).
    """
    if spec.startswith("synthetic:"):
        return generate_synthetic(spec.split(":", 1)[1], n=n, noise=noise, seed=seed)
    fmt = "csv" if spec.endswith(".csv") else "libsvm"
    return load_dataset(spec, fmt)


# --- synthetic data --------------------------------------------------------

def generate_synthetic(kind: str = "two-gaussians", n: int = 200, noise: float = 0.3,
                       seed: int = 0) -> Dataset:
    """Balanced 2-D binary dataset.

    ``two-gaussians`` places isotropic clouds (std ``noise``) at (-1, -1) and
    (+1, +1); ``two-moons`` draws interleaved half circles with Gaussian
    jitter of std ``noise``.
    """
    if n < 4:
        raise DataError("n must be at least 4")
    rng = np.random.default_rng(seed)
    n_pos = n // 2
    n_neg = n - n_pos
    if kind == "two-gaussians":
        pos = rng.normal(1.0, noise, size=(n_pos, 2)) if noise > 0 else np.ones((n_pos, 2))
        neg = rng.normal(-1.0, noise, size=(n_neg, 2)) if noise > 0 else -np.ones((n_neg, 2))
    elif kind == "two-moons":
        t_pos = rng.uniform(0, np.pi, n_pos)
        t_neg = rng.uniform(0, np.pi, n_neg)
        pos = np.column_stack([np.cos(t_pos), np.sin(t_pos)])
        neg = np.column_stack([1 - np.cos(t_neg), 0.5 - np.sin(t_neg)])
        pos = pos + rng.normal(0, noise, pos.shape) if noise > 0 else pos
        neg = neg + rng.normal(0, noise, neg.shape) if noise > 0 else neg
    else:
        raise DataError(f"unknown synthetic kind {kind!r}")
    X = np.vstack([pos, neg])
    y = np.concatenate([np.ones(n_pos), -np.ones(n_neg)])
    order = rng.permutation(n)
    return Dataset(X[order], y[order])


# --- scaling, splitting ----------------------------------------------------

def standardize(train: Dataset, others=()):
    """Zero-mean, unit sample-std scaling fitted on ``train``.

    Returns ``(train_scaled, [others_scaled...], scaler)``.
    """
    X = train.features
    mean = X.mean(axis=0)
    std = X.std(axis=0, ddof=1) if train.n > 1 else np.zeros(train.d)
    scaler = Scaler(mean, np.maximum(std, 1e-12))
    return scaler.transform(train), [scaler.transform(o) for o in others], scaler


def _class_indices(ds: Dataset, rng):
    return {c: rng.permutation(np.flatnonzero(ds.labels == c)) for c in (1, -1)}


def stratified_split(ds: Dataset, spec: SplitSpec):
    """Split ``ds`` into train/test keeping each class's proportion."""
    rng = np.random.default_rng(spec.seed)
    train_idx, test_idx = [], []
    for c, idx in _class_indices(ds, rng).items():
        if len(idx) < 2:
            raise DataError(f"class {c:+d} has fewer than 2 samples")
        n_train = int(round(spec.train_fraction * len(idx)))
        n_train = min(max(n_train, 1), len(idx) - 1)
        train_idx.append(idx[:n_train])
        test_idx.append(idx[n_train:])
    train_idx = np.sort(np.concatenate(train_idx))
    test_idx = np.sort(np.concatenate(test_idx))
    return ds.subset(train_idx), ds.subset(test_idx)


def sized_split(ds: Dataset, n_train: int, n_test: int, seed: int = 0):
    """Stratified draw of exactly ``n_train`` and ``n_test`` disjoint samples."""
    if n_train + n_test > ds.n:
        raise DataError("requested split larger than the dataset")
    rng = np.random.default_rng(seed)
    picked = ds.subset(np.sort(rng.permutation(ds.n)[: n_train + n_test]))
    frac = n_train / (n_train + n_test)
    train, test = stratified_split(picked, SplitSpec(frac, 1, seed))
    return train, test


def kfold(ds: Dataset, k: int = 5, seed: int = 0):
    """Stratified k-fold: list of ``(train, validation)`` pairs."""
    if k < 2:
        raise DataError("k must be at least 2")
    if k > ds.n:
        raise DataError(f"k={k} exceeds the number of samples ({ds.n})")
    rng = np.random.default_rng(seed)
    fold_of = np.empty(ds.n, dtype=int)
    offset = 0
    for c, idx in _class_indices(ds, rng).items():
        # continue the round-robin across classes so fold sizes stay balanced
        fold_of[idx] = (np.arange(len(idx)) + offset) % k
        offset += len(idx)
    pairs = []
    for f in range(k):
        val = np.flatnonzero(fold_of == f)
        tr = np.flatnonzero(fold_of != f)
        pairs.append((ds.subset(tr), ds.subset(val)))
    return pairs
