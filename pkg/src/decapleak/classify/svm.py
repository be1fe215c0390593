"""Linear SVM: hinge loss with L2 penalty, trained by epoch-wise subgradient
descent with step size 1/(lambda*t). Multi-class problems use one-vs-rest."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from .dataset import Dataset, StandardizeParams, standardize_apply, standardize_fit


@dataclass(frozen=True, eq=False)
class SVMModel:
    classes: tuple[int, ...]
    units: tuple[tuple[int, int], ...]  # (positive class position, negative class position or -1 for rest)
    weights: np.ndarray  # (n_units, n_features)
    biases: np.ndarray
    scaler: StandardizeParams | None


def _train_unit(X: np.ndarray, y: np.ndarray, epochs: int, lam: float, rng: np.random.Generator):
    n, d = X.shape
    w = np.zeros(d)
    b = 0.0
    t = 0
    for _ in range(epochs):
        for i in rng.permutation(n):
            t += 1
            eta = 1.0 / (lam * t)
            margin = y[i] * (X[i] @ w + b)
            w *= 1.0 - eta * lam
            if margin < 1.0:
                w += eta * y[i] * X[i]
                b += eta * y[i]
    return w, b


def svm_train(
    train: Dataset, epochs: int = 50, lam: float = 1e-3, seed: int = 0, standardize: bool = True
) -> SVMModel:
    if epochs < 1:
        raise ConfigError(f"epochs must be >= 1, got {epochs}")
    if not lam > 0:
        raise ConfigError(f"lambda must be positive, got {lam}")
    targets = train.class_index
    present = sorted(set(targets.tolist()))
    if len(present) < 2:
        raise ConfigError("SVM training needs at least two classes in the training set")
    scaler = standardize_fit(train.features) if standardize else None
    X = standardize_apply(scaler, train.features) if scaler else train.features

    if len(present) == 2:
        neg, pos = present
        units = ((pos, neg),)
        problems = [np.where(targets == pos, 1.0, -1.0)]
    else:
        units = tuple((c, -1) for c in present)
        problems = [np.where(targets == c, 1.0, -1.0) for c in present]

    weights, biases = [], []
    for u, y in enumerate(problems):
        rng = np.random.default_rng([seed, u])
        w, b = _train_unit(X, y, epochs, lam, rng)
        weights.append(w)
        biases.append(b)
    return SVMModel(train.classes, units, np.array(weights), np.array(biases), scaler)


def svm_decision(model: SVMModel, features) -> np.ndarray:
    X = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if model.scaler is not None:
        X = standardize_apply(model.scaler, X)
    return X @ model.weights.T + model.biases


def svm_predict_many(model: SVMModel, features) -> np.ndarray:
    scores = svm_decision(model, features)
    if len(model.units) == 1:
        pos, neg = model.units[0]
        # a zero score goes to the lower class index
        idx = np.where(scores[:, 0] > 0, pos, neg)
    else:
        # argmax returns the first maximum; units are in ascending class order
        idx = np.array([model.units[j][0] for j in np.argmax(scores, axis=1)])
    return np.array([model.classes[i] for i in idx], dtype=np.int64)


def svm_predict(model: SVMModel, row) -> int:
    return int(svm_predict_many(model, row)[0])
