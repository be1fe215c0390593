from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InputError


@dataclass(frozen=True, eq=False)
class Metrics:
    """Confusion matrix (rows = truth, columns = prediction) and derived scores."""

    classes: tuple[int, ...]
    confusion: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    accuracy: float

    @property
    def support(self) -> np.ndarray:
        return self.confusion.sum(axis=1)

    @property
    def macro_f1(self) -> float:
        return float(self.f1.mean())

    @property
    def macro_recall(self) -> float:
        return float(self.recall.mean())

    @property
    def macro_precision(self) -> float:
        return float(self.precision.mean())

    def to_dict(self) -> dict:
        return {
            "classes": list(self.classes),
            "confusion": self.confusion.tolist(),
            "per_class": {
                str(c): {
                    "precision": float(self.precision[i]),
                    "recall": float(self.recall[i]),
                    "f1": float(self.f1[i]),
                    "support": int(self.support[i]),
                }
                for i, c in enumerate(self.classes)
            },
            "accuracy": self.accuracy,
            "macro": {
                "precision": self.macro_precision,
                "recall": self.macro_recall,
                "f1": self.macro_f1,
            },
        }


def _safe_ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    out = np.zeros(num.shape, dtype=np.float64)
    np.divide(num, den, out=out, where=den > 0)
    return out


def metrics_from_confusion(confusion, classes) -> Metrics:
    cm = np.asarray(confusion, dtype=np.int64)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1] or cm.shape[0] != len(classes):
        raise InputError(f"confusion must be {len(classes)}x{len(classes)}, got {cm.shape}")
    if np.any(cm < 0):
        raise InputError("confusion entries must be non-negative")
    total = cm.sum()
    if total == 0:
        raise InputError("confusion matrix is empty")
    tp = np.diag(cm).astype(np.float64)
    precision = _safe_ratio(tp, cm.sum(axis=0).astype(np.float64))
    recall = _safe_ratio(tp, cm.sum(axis=1).astype(np.float64))
    f1 = _safe_ratio(2 * precision * recall, precision + recall)
    return Metrics(tuple(classes), cm, precision, recall, f1, float(tp.sum() / total))


def evaluate(predictions, truth, classes) -> Metrics:
    pred = np.asarray(predictions).astype(np.int64).ravel()
    true = np.asarray(truth).astype(np.int64).ravel()
    if pred.size != true.size:
        raise InputError(f"{pred.size} predictions for {true.size} truth labels")
    if pred.size == 0:
        raise InputError("nothing to evaluate")
    lookup = {int(c): i for i, c in enumerate(classes)}
    cm = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for t, p in zip(true.tolist(), pred.tolist()):
        if t not in lookup or p not in lookup:
            raise InputError(f"label {t if t not in lookup else p} is not among classes {tuple(classes)}")
        cm[lookup[t], lookup[p]] += 1
    return metrics_from_confusion(cm, classes)
