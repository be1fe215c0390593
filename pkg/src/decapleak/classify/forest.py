"""Random forest of CART trees (Gini impurity), built from scratch so that
every tie is resolved by a documented rule.

Split search at a node draws a fresh feature permutation and evaluates the
first ``max_features`` features that are not constant within the node.
Among equally good splits the earliest candidate feature wins, then the
lowest threshold. Samples with ``x <= threshold`` go left.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from .dataset import Dataset


@dataclass(frozen=True, eq=False)
class Tree:
    feature: np.ndarray  # -1 at leaves
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # class position predicted at each node

    def predict(self, X: np.ndarray) -> np.ndarray:
        out = np.empty(X.shape[0], dtype=np.int64)
        for r in range(X.shape[0]):
            node = 0
            while self.feature[node] >= 0:
                if X[r, self.feature[node]] <= self.threshold[node]:
                    node = self.left[node]
                else:
                    node = self.right[node]
            out[r] = self.value[node]
        return out

    @property
    def n_nodes(self) -> int:
        return self.feature.size


@dataclass(frozen=True, eq=False)
class ForestModel:
    classes: tuple[int, ...]
    trees: tuple[Tree, ...]
    seed: int


def _best_split(X: np.ndarray, y: np.ndarray, n_cls: int, candidates: np.ndarray):
    """Return (feature, threshold) minimising weighted Gini, or None."""
    n = y.size
    Xc = X[:, candidates]
    order = np.argsort(Xc, axis=0, kind="stable")
    xs = np.take_along_axis(Xc, order, axis=0)
    ys = y[order]
    onehot = ys[:, :, None] == np.arange(n_cls)
    left = np.cumsum(onehot, axis=0)[:-1].astype(np.float64)  # (n-1, m, C)
    total = left[-1] + onehot[-1]
    right = total - left
    nl = np.arange(1, n, dtype=np.float64)[:, None]
    nr = n - nl
    # n * weighted gini = nl - sum(left^2)/nl + nr - sum(right^2)/nr
    cost = (nl - (left**2).sum(axis=2) / nl) + (nr - (right**2).sum(axis=2) / nr)
    valid = xs[:-1] < xs[1:]
    cost = np.where(valid, cost, np.inf)
    flat = np.argmin(cost.T)  # feature-major: earliest candidate, then lowest position
    j, i = divmod(int(flat), n - 1)
    if not np.isfinite(cost[i, j]):
        return None
    lo, hi = xs[i, j], xs[i + 1, j]
    thr = (lo + hi) / 2
    if not lo <= thr < hi:
        thr = lo
    return int(candidates[j]), float(thr)


def _grow_tree(X, y, n_cls, max_features, max_depth, rng) -> Tree:
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(rows):
        counts = np.bincount(y[rows], minlength=n_cls)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(int(np.argmax(counts)))  # ties -> lower class position
        return len(feature) - 1

    root = new_node(np.arange(y.size))
    stack = [(root, np.arange(y.size), 0)]
    while stack:
        node, rows, depth = stack.pop()
        yn = y[rows]
        if rows.size < 2 or np.all(yn == yn[0]):
            continue
        if max_depth is not None and depth >= max_depth:
            continue
        Xn = X[rows]
        perm = rng.permutation(X.shape[1])
        varying = np.ptp(Xn, axis=0) != 0
        candidates = perm[varying[perm]][:max_features]
        if candidates.size == 0:
            continue
        found = _best_split(Xn, yn, n_cls, candidates)
        if found is None:
            continue
        f, thr = found
        go_left = Xn[:, f] <= thr
        lrows, rrows = rows[go_left], rows[~go_left]
        feature[node] = f
        threshold[node] = thr
        left[node] = new_node(lrows)
        right[node] = new_node(rrows)
        # right pushed first so the left subtree is expanded first
        stack.append((right[node], rrows, depth + 1))
        stack.append((left[node], lrows, depth + 1))
    return Tree(
        np.array(feature, dtype=np.int64),
        np.array(threshold),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(value, dtype=np.int64),
    )


def rf_train(
    train: Dataset,
    n_trees: int = 100,
    max_depth: int | None = None,
    seed: int = 0,
    bootstrap: bool = True,
    max_features: int | None = None,
    jobs: int = 1,
) -> ForestModel:
    """Bagged CART trees; tree ``i`` draws from the stream seeded by ``(seed, i)``.

    ``max_features`` defaults to ``floor(sqrt(n_features))``.
    """
    if n_trees < 1:
        raise ConfigError(f"n_trees must be >= 1, got {n_trees}")
    if max_depth is not None and max_depth < 0:
        raise ConfigError(f"max_depth must be >= 0, got {max_depth}")
    X = train.features
    y = train.class_index
    n, d = X.shape
    m = max_features if max_features is not None else max(1, math.floor(math.sqrt(d)))
    if not 1 <= m <= d:
        raise ConfigError(f"max_features must be in 1..{d}, got {m}")
    n_cls = len(train.classes)

    def grow(i: int) -> Tree:
        rng = np.random.default_rng([seed, i])
        rows = rng.integers(0, n, n) if bootstrap else np.arange(n)
        return _grow_tree(X[rows], y[rows], n_cls, m, max_depth, rng)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            trees = tuple(pool.map(grow, range(n_trees)))
    else:
        trees = tuple(grow(i) for i in range(n_trees))
    return ForestModel(train.classes, trees, seed)


def rf_predict_many(model: ForestModel, features) -> np.ndarray:
    X = np.atleast_2d(np.asarray(features, dtype=np.float64))
    votes = np.zeros((X.shape[0], len(model.classes)), dtype=np.int64)
    for tree in model.trees:
        votes[np.arange(X.shape[0]), tree.predict(X)] += 1
    idx = np.argmax(votes, axis=1)  # ties -> lower class position
    return np.array([model.classes[i] for i in idx], dtype=np.int64)


def rf_predict(model: ForestModel, row) -> int:
    return int(rf_predict_many(model, row)[0])
