from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from .dataset import Dataset


@dataclass(frozen=True, eq=False)
class KNNModel:
    features: np.ndarray
    targets: np.ndarray  # positions in ``classes``
    classes: tuple[int, ...]
    k: int


def knn_train(train: Dataset, k: int = 5) -> KNNModel:
    if not 1 <= k <= len(train):
        raise ConfigError(f"k must be in 1..{len(train)}, got {k}")
    return KNNModel(train.features, train.class_index, train.classes, k)


def knn_predict(model: KNNModel, row) -> int:
    """Majority label among the ``k`` nearest training rows (Euclidean).

    Equal distances keep training-row order. A tied vote goes to the class
    whose voters have the smaller summed distance, then to the lower class index.
    """
    q = np.asarray(row, dtype=np.float64)
    d = np.sqrt(((model.features - q) ** 2).sum(axis=1))
    nearest = np.argsort(d, kind="stable")[: model.k]
    n_cls = len(model.classes)
    votes = np.bincount(model.targets[nearest], minlength=n_cls)
    dist_sum = np.bincount(model.targets[nearest], weights=d[nearest], minlength=n_cls)
    best = min(
        (c for c in range(n_cls) if votes[c] == votes.max()),
        key=lambda c: (dist_sum[c], c),
    )
    return model.classes[best]


def knn_predict_many(model: KNNModel, features) -> np.ndarray:
    return np.array([knn_predict(model, r) for r in np.asarray(features)], dtype=np.int64)
