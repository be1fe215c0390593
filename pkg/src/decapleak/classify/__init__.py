"""Bit-prediction classifiers trained on trace samples."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError
from .dataset import (
    Dataset,
    SplitResult,
    StandardizeParams,
    build_dataset,
    split,
    standardize_apply,
    standardize_fit,
)
from .forest import ForestModel, rf_predict, rf_predict_many, rf_train
from .knn import KNNModel, knn_predict, knn_predict_many, knn_train
from .metrics import Metrics, evaluate, metrics_from_confusion
from .svm import SVMModel, svm_predict, svm_predict_many, svm_train

CLASSIFIERS = ("knn", "svm", "rf")

DISPLAY_NAMES = {"knn": "kNN", "svm": "Linear SVM", "rf": "Random Forest"}


@dataclass
class Hyperparams:
    k: int = 5
    epochs: int = 50
    lam: float = 1e-3
    n_trees: int = 100
    max_depth: int | None = None
    jobs: int = 1
    extra: dict = field(default_factory=dict)


def fit(name: str, train: Dataset, seed: int = 0, hp: Hyperparams | None = None):
    hp = hp or Hyperparams()
    if name == "knn":
        return knn_train(train, hp.k)
    if name == "svm":
        return svm_train(train, hp.epochs, hp.lam, seed)
    if name == "rf":
        return rf_train(train, hp.n_trees, hp.max_depth, seed, jobs=hp.jobs)
    raise ConfigError(f"unknown classifier {name!r}; expected one of {CLASSIFIERS}")


def predict(model, features) -> np.ndarray:
    if isinstance(model, KNNModel):
        return knn_predict_many(model, features)
    if isinstance(model, SVMModel):
        return svm_predict_many(model, features)
    if isinstance(model, ForestModel):
        return rf_predict_many(model, features)
    raise ConfigError(f"not a trained model: {type(model).__name__}")


def run_split(name: str, parts: SplitResult, seed: int = 0, hp: Hyperparams | None = None) -> Metrics:
    """Train on ``parts.train`` and score on ``parts.test``."""
    model = fit(name, parts.train, seed, hp)
    return evaluate(predict(model, parts.test.features), parts.test.labels, parts.test.classes)


__all__ = [
    "CLASSIFIERS",
    "DISPLAY_NAMES",
    "Dataset",
    "ForestModel",
    "Hyperparams",
    "KNNModel",
    "Metrics",
    "SVMModel",
    "SplitResult",
    "StandardizeParams",
    "build_dataset",
    "evaluate",
    "fit",
    "knn_predict",
    "knn_train",
    "metrics_from_confusion",
    "predict",
    "rf_predict",
    "rf_train",
    "run_split",
    "split",
    "standardize_apply",
    "standardize_fit",
    "svm_predict",
    "svm_train",
]
