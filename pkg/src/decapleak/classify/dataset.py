from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import InputError, ValidationError
from ..traces import LabelSpec, TraceSet


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix (one row per trace) with integer class labels."""

    features: np.ndarray
    labels: np.ndarray
    classes: tuple[int, ...]
    trace_ids: tuple[int, ...] = ()

    def __post_init__(self):
        X = np.array(self.features, dtype=np.float64)
        y = np.array(self.labels, dtype=np.int64)
        if X.ndim != 2:
            raise ValidationError(f"features must be 2-D, got shape {X.shape}")
        if y.ndim != 1 or y.size != X.shape[0]:
            raise ValidationError(f"{y.size} labels for {X.shape[0]} feature rows")
        if not np.all(np.isfinite(X)):
            row, col = np.argwhere(~np.isfinite(X))[0]
            raise ValidationError(f"non-finite feature at row {row}, column {col}", index=int(col))
        classes = tuple(int(c) for c in self.classes)
        if len(set(classes)) != len(classes):
            raise ValidationError("classes must be distinct")
        stray = set(np.unique(y).tolist()) - set(classes)
        if stray:
            raise ValidationError(f"labels {sorted(stray)} not among classes {classes}")
        ids = tuple(int(i) for i in self.trace_ids) or tuple(range(y.size))
        if len(ids) != y.size:
            raise ValidationError("trace_ids length differs from row count")
        X.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "classes", classes)
        object.__setattr__(self, "trace_ids", ids)

    def __len__(self) -> int:
        return self.labels.size

    @property
    def class_index(self) -> np.ndarray:
        """Labels mapped to positions in ``classes``."""
        lookup = {c: i for i, c in enumerate(self.classes)}
        return np.array([lookup[int(v)] for v in self.labels], dtype=np.int64)

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset(
            self.features[rows],
            self.labels[rows],
            self.classes,
            tuple(self.trace_ids[i] for i in rows),
        )


@dataclass(frozen=True, eq=False)
class SplitResult:
    train: Dataset
    test: Dataset
    seed: int
    ratio: float


def build_dataset(ts: TraceSet, spec: LabelSpec) -> Dataset:
    """Rows in ascending trace_id order, labels from the secret sidecar."""
    if not ts.has_sidecar:
        raise InputError("trace set has no secret sidecar; labels cannot be built")
    ordered = ts.sorted_by_id()
    return Dataset(ordered.matrix, ordered.labels(spec), spec.classes, tuple(ordered.trace_ids))


def _stratified_order(labels: np.ndarray, n_train: int, rng: np.random.Generator) -> np.ndarray:
    # per-class shares by largest remainder so the total is exactly n_train
    n = labels.size
    classes = np.unique(labels)
    members = [rng.permutation(np.flatnonzero(labels == c)) for c in classes]
    exact = [len(m) * n_train / n for m in members]
    take = [math.floor(e) for e in exact]
    by_remainder = sorted(range(len(classes)), key=lambda i: (-(exact[i] - take[i]), i))
    for i in by_remainder[: n_train - sum(take)]:
        take[i] += 1
    train = np.concatenate([m[:k] for m, k in zip(members, take)])
    test = np.concatenate([m[k:] for m, k in zip(members, take)])
    return np.concatenate([rng.permutation(train), rng.permutation(test)])


def split(d: Dataset, ratio: float = 0.8, seed: int = 0, stratified: bool = False) -> SplitResult:
    """Shuffle by ``seed`` and cut at ``floor(ratio * n)``."""
    n = len(d)
    if not 0 < ratio < 1:
        raise InputError(f"ratio must lie in (0, 1), got {ratio}")
    if n < 2:
        raise InputError(f"need at least 2 rows to split, got {n}")
    n_train = math.floor(ratio * n)
    if n_train == 0 or n_train == n:
        raise InputError(f"ratio {ratio} on {n} rows leaves an empty train or test set")
    rng = np.random.default_rng(seed)
    if stratified:
        order = _stratified_order(d.labels, n_train, rng)
    else:
        order = rng.permutation(n)
    return SplitResult(d.subset(order[:n_train]), d.subset(order[n_train:]), seed, ratio)


@dataclass(frozen=True, eq=False)
class StandardizeParams:
    mean: np.ndarray
    std: np.ndarray


def standardize_fit(features) -> StandardizeParams:
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise InputError("standardize_fit needs a non-empty 2-D matrix")
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    # a constant column can pick up rounding noise in mean/std; pin it exactly
    flat = np.ptp(X, axis=0) == 0
    mean[flat] = X[0, flat]
    std[flat] = 0.0
    return StandardizeParams(mean, std)


def standardize_apply(params: StandardizeParams, features) -> np.ndarray:
    """``(x - mean) / std``; zero-variance columns are only centered."""
    X = np.asarray(features, dtype=np.float64)
    scale = np.where(params.std > 0, params.std, 1.0)
    return (X - params.mean) / scale
