"""Benchmark ingestion (libsvm / CSV), label reduction, scaling and held-out error."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from ..data import Dataset
from ..errors import UsageError
from ..model import LossModel

MAX_DENSE_FEATURES = 100_000
DEFAULT_RULES = {"mnist": "le-4", "covertype": "2-vs-rest"}


class LabelRule:
    """Maps raw labels to {0, 1}.

    ``binary``: labels must already be two values; {-1, +1} and {0, 1} map
    as expected, any other pair maps the smaller to 0.
    ``K-vs-rest``: 1 where the label equals K.
    ``le-K``: 1 where the label is at most K (digits 0-4 vs 5-9 for ``le-4``).
    """

    def __init__(self, text: str):
        self.text = text
        if text == "binary":
            self.kind, self.k = "binary", None
        elif text.endswith("-vs-rest"):
            self.kind, self.k = "vs-rest", float(text[: -len("-vs-rest")])
        elif text.startswith("le-"):
            self.kind, self.k = "le", float(text[3:])
        else:
            raise UsageError(f"unknown label rule {text!r}; use 'binary', 'K-vs-rest' or 'le-K'")

    def __call__(self, labels) -> np.ndarray:
        labels = np.asarray(labels, dtype=float)
        if self.kind == "vs-rest":
            return (labels == self.k).astype(float)
        if self.kind == "le":
            return (labels <= self.k).astype(float)
        values = np.unique(labels)
        if len(values) > 2:
            raise UsageError(f"rule 'binary' got {len(values)} distinct labels: {values[:5]}")
        if set(values) <= {0.0, 1.0}:
            return labels
        if set(values) <= {-1.0, 1.0}:
            return (labels > 0).astype(float)
        return (labels == values.max()).astype(float)


def parse_libsvm(path, n_features: Optional[int] = None):
    """Read a libsvm file into dense ``(X, labels)``; feature indices are 1-based."""
    labels, rows = [], []
    width = 0
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            try:
                labels.append(float(parts[0]))
                entries = []
                for tok in parts[1:]:
                    idx, val = tok.split(":")
                    j = int(idx)
                    if j < 1:
                        raise ValueError("index must be >= 1")
                    entries.append((j - 1, float(val)))
            except ValueError as exc:
                raise UsageError(f"{path}: malformed libsvm line {lineno}: {exc}") from None
            if entries:
                width = max(width, max(j for j, _ in entries) + 1)
            rows.append(entries)
    if not rows:
        raise UsageError(f"{path}: no observations")
    p = width if n_features is None else n_features
    if p < width:
        raise UsageError(f"{path}: feature index {width} exceeds n_features={p}")
    if p > MAX_DENSE_FEATURES:
        raise UsageError(f"{path}: {p} features is too many to densify (limit {MAX_DENSE_FEATURES})")
    X = np.zeros((len(rows), p))
    for i, entries in enumerate(rows):
        for j, v in entries:
            X[i, j] = v
    return X, np.array(labels)


def parse_csv(path, label_column: str = "y"):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise UsageError(f"{path}: empty file") from None
        if label_column not in header:
            raise UsageError(f"{path}: no label column {label_column!r} in header")
        k = header.index(label_column)
        labels, rows = [], []
        for lineno, row in enumerate(reader, 2):
            if not row:
                continue
            if len(row) != len(header):
                raise UsageError(f"{path}: line {lineno} has {len(row)} fields, header has {len(header)}")
            try:
                values = [float(v) for v in row]
            except ValueError as exc:
                raise UsageError(f"{path}: malformed value on line {lineno}: {exc}") from None
            labels.append(values.pop(k))
            rows.append(values)
    if not rows:
        raise UsageError(f"{path}: no observations")
    return np.array(rows), np.array(labels)


@dataclass
class Benchmark:
    train: Dataset
    test: Dataset
    scale_min: np.ndarray
    scale_max: np.ndarray
    label_rule: str


def min_max_scale(train, *others):
    """Scale columns to [0, 1] with the train range; constant columns become 0."""
    lo, hi = train.min(axis=0), train.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    return lo, hi, [(A - lo) / span for A in (train,) + others]


def load_benchmark(path, format: Optional[str] = None, label_rule: str = "binary", seed: int = 0,
                   test_fraction: float = 0.2, label_column: str = "y", n_features: Optional[int] = None,
                   subsample: Optional[int] = None) -> Benchmark:
    """Load, binarize, split (seeded shuffle) and min-max scale a benchmark file.

    ``subsample`` keeps a seeded random subset of rows before splitting.
    """
    path = Path(path)
    if not path.exists():
        raise UsageError(f"{path}: no such file")
    fmt = format or ("csv" if path.suffix.lower() == ".csv" else "libsvm")
    if fmt == "libsvm":
        X, labels = parse_libsvm(path, n_features)
    elif fmt == "csv":
        X, labels = parse_csv(path, label_column)
    else:
        raise UsageError(f"unknown format {fmt!r}; expected 'libsvm' or 'csv'")
    if not 0 < test_fraction < 1:
        raise UsageError("test_fraction must lie in (0, 1)")
    y = LabelRule(label_rule)(labels)
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(y))
    if subsample is not None and subsample < len(y):
        order = order[:subsample]
    n_test = max(1, int(round(test_fraction * len(order))))
    if n_test >= len(order):
        raise UsageError("too few observations to split")
    test_idx, train_idx = order[:n_test], order[n_test:]
    lo, hi, (Xtr, Xte) = min_max_scale(X[train_idx], X[test_idx])
    meta = {"path": str(path), "format": fmt, "label_rule": label_rule, "seed": seed}
    return Benchmark(Dataset(Xtr, y[train_idx], meta), Dataset(Xte, y[test_idx], meta), lo, hi, label_rule)


def holdout_error(model: LossModel, theta, test: Dataset) -> float:
    """Misclassification rate at 0.5 (logistic) or mean squared error."""
    if len(test) == 0:
        raise UsageError("empty test set")
    theta = np.asarray(theta, dtype=float)
    if theta.ndim == 2:
        return np.array([holdout_error(model, t, test) for t in theta])
    with np.errstate(over="ignore", invalid="ignore"):
        u = test.X @ theta
    if model.kind == "logistic":
        return float(np.mean((u > 0).astype(float) != test.y))
    return float(np.mean((test.y - model.h(u)) ** 2))


def with_intercept(data: Dataset) -> Dataset:
    return Dataset(np.column_stack([np.ones(len(data)), data.X]), data.y, data.meta)


def benchmark_curves(bench: Benchmark, methods, passes: float = 10, seeds: int = 1, seed: int = 0,
                     intercept: bool = True, checkpoints=None, grid=None, burnin=None):
    """Held-out error against data passes for each method on a loaded benchmark."""
    from .compare import TUNING_GRID, Curves, default_checkpoints, run_method, tune_rate

    if not passes >= 1:
        raise UsageError("budget must be at least one data pass")
    model = LossModel.logistic()
    train = with_intercept(bench.train) if intercept else bench.train
    test = with_intercept(bench.test) if intercept else bench.test
    checkpoints = default_checkpoints(passes) if checkpoints is None else np.asarray(checkpoints)
    grid = TUNING_GRID if grid is None else grid
    theta0 = np.zeros(train.p)
    burnin = len(train) if burnin is None else burnin

    def metric(theta):
        return np.asarray(holdout_error(model, theta, test))

    out = Curves(checkpoints)
    for m in methods:
        rate = tune_rate(m, model, train.X, train.y, seed, theta0, passes, grid, burnin)
        rngs = [np.random.default_rng([seed, 2, s]) for s in range(seeds)]
        _, curve, div = run_method(m, model, train.X, train.y, rngs, theta0, np.full(seeds, rate), passes,
                                   checkpoints, metric, burnin)
        out.values[m], out.rates[m], out.diverged[m] = curve, rate, div
    return out
