"""First-order leakage statistics: Hamming weight, Pearson correlation,
and the threshold-based leakage verdict."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .errors import InputError, MisuseError

if TYPE_CHECKING:
    from .sim import LeakageModel
    from .traces import TraceSet

DEFAULT_THRESHOLD = 0.1

HW_TABLE = np.array([bin(b).count("1") for b in range(256)], dtype=np.uint8)


def hamming_weight(b: int) -> int:
    """Number of set bits in a byte."""
    return int(HW_TABLE[b & 0xFF])


def pearson(x, y) -> float:
    """Two-pass Pearson correlation of two equal-length sequences.

    Returns ``nan`` when either input has zero variance.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or y.ndim != 1:
        raise InputError("pearson expects one-dimensional inputs")
    if x.size != y.size:
        raise InputError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 2:
        raise InputError("pearson needs at least two observations")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        return float("nan")
    dx = x - x.mean()
    dy = y - y.mean()
    r = np.sum(dx * dy) / (np.sqrt(np.sum(dx * dx)) * np.sqrt(np.sum(dy * dy)))
    return float(np.clip(r, -1.0, 1.0))


@dataclass(frozen=True, eq=False)
class CorrelationSeries:
    """Per-sample correlation against a label vector; ``nan`` marks absent entries."""

    rho: np.ndarray
    n_traces: int
    label_kind: str = "hamming_weight"

    @property
    def absent(self) -> np.ndarray:
        return np.isnan(self.rho)

    def __len__(self) -> int:
        return self.rho.size

    def to_csv(self, stream) -> None:
        w = csv.writer(stream, lineterminator="\n")
        w.writerow(["sample_index", "rho"])
        for i, r in enumerate(self.rho):
            w.writerow([i, "" if np.isnan(r) else repr(float(r))])


def correlation_matrix(matrix, labels) -> np.ndarray:
    """Column-wise Pearson correlation of ``matrix`` (traces x samples) with ``labels``."""
    X = np.asarray(matrix, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if X.ndim != 2:
        raise InputError(f"expected a 2-D trace matrix, got shape {X.shape}")
    if y.ndim != 1 or y.size != X.shape[0]:
        raise InputError(f"{y.size} labels for {X.shape[0]} traces")
    if X.shape[0] < 2:
        raise InputError("correlation needs at least two traces")
    rho = np.full(X.shape[1], np.nan)
    if np.ptp(y) == 0:
        return rho
    live = np.ptp(X, axis=0) != 0
    dx = X[:, live] - X[:, live].mean(axis=0)
    dy = y - y.mean()
    # elementwise product + axis-0 sum keeps the reduction order fixed
    num = (dx * dy[:, None]).sum(axis=0)
    den = np.sqrt((dx * dx).sum(axis=0)) * np.sqrt(np.sum(dy * dy))
    rho[live] = np.clip(num / den, -1.0, 1.0)
    return rho


def correlation_series(ts: "TraceSet", labels: Sequence[float], label_kind: str = "hamming_weight") -> CorrelationSeries:
    labels = np.asarray(labels, dtype=np.float64)
    if labels.size != len(ts):
        raise InputError(f"{labels.size} labels for {len(ts)} traces")
    rho = correlation_matrix(ts.matrix, labels)
    rho.flags.writeable = False
    return CorrelationSeries(rho, len(ts), label_kind)


def hw_labels(ts: "TraceSet", byte_index: int = 0) -> np.ndarray:
    """Hamming weight of the secret byte ``byte_index`` from the end, in trace order."""
    from .traces import LabelSpec

    return ts.labels(LabelSpec("hamming_weight", byte_index=byte_index)).astype(np.float64)


@dataclass(frozen=True)
class LeakageReport:
    threshold: float
    exceed_indices: tuple[int, ...]
    peak_rho: float | None
    peak_index: int | None
    verdict: bool
    n_traces: int = 0
    label_kind: str = ""

    def line(self) -> str:
        peak = "n/a" if self.peak_rho is None else f"{self.peak_rho:.6f}"
        return (
            f"LEAKAGE: {'yes' if self.verdict else 'no'} "
            f"(peak={peak} at {self.peak_index}, threshold={self.threshold:g})"
        )

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "verdict": self.verdict,
            "peak_rho": self.peak_rho,
            "peak_index": self.peak_index,
            "n_exceed": len(self.exceed_indices),
            "exceed_indices": list(self.exceed_indices),
            "n_traces": self.n_traces,
            "label_kind": self.label_kind,
        }


def leakage_verdict(series: CorrelationSeries, threshold: float = DEFAULT_THRESHOLD) -> LeakageReport:
    """Flag sample indices whose |rho| exceeds ``threshold`` (two-sided rule)."""
    if not 0 < threshold < 1:
        raise InputError(f"threshold must lie in (0, 1), got {threshold}")
    rho = np.asarray(series.rho)
    mag = np.where(np.isnan(rho), -1.0, np.abs(rho))
    exceed = tuple(int(i) for i in np.flatnonzero(mag > threshold))
    if np.all(np.isnan(rho)):
        peak_index = None
        peak_rho = None
    else:
        peak_index = int(np.argmax(mag))
        peak_rho = float(rho[peak_index])
    return LeakageReport(
        threshold=threshold,
        exceed_indices=exceed,
        peak_rho=peak_rho,
        peak_index=peak_index,
        verdict=bool(exceed),
        n_traces=series.n_traces,
        label_kind=series.label_kind,
    )


@dataclass(frozen=True)
class FlagRate:
    rate: float
    flagged: int
    total: int
    seeds: tuple[int, ...] = field(default=())

    def __float__(self) -> float:
        return self.rate


def flag_counts(rho: np.ndarray, threshold: float) -> tuple[int, int]:
    """(flagged, non-absent) counts of a correlation vector."""
    finite = ~np.isnan(rho)
    return int(np.sum(np.abs(rho[finite]) > threshold)), int(np.sum(finite))


def false_positive_rate(
    model: "LeakageModel",
    n_seeds: int,
    threshold: float = DEFAULT_THRESHOLD,
    n_traces: int = 250,
    seeds: Sequence[int] | None = None,
    byte_index: int = 0,
) -> FlagRate:
    """Monte Carlo fraction of (seed, sample) pairs flagged under a leak-free model.

    Seeds default to ``model.seed, model.seed + 1, ...``. Absent (zero
    variance) columns are excluded from the denominator.
    """
    from .sim import simulate_campaign

    if any(w.alpha != 0 for w in model.windows):
        raise MisuseError("false_positive_rate needs a model without leakage (all alpha == 0)")
    if threshold < 0:
        raise InputError("threshold must be non-negative")
    if seeds is None:
        if n_seeds < 1:
            raise InputError("n_seeds must be >= 1")
        seeds = [model.seed + k for k in range(n_seeds)]
    flagged = total = 0
    for s in seeds:
        ts = simulate_campaign(n_traces, replace(model, seed=int(s)))
        rho = correlation_matrix(ts.matrix, hw_labels(ts, byte_index))
        f, t = flag_counts(rho, threshold)
        flagged += f
        total += t
    rate = flagged / total if total else 0.0
    return FlagRate(rate, flagged, total, tuple(int(s) for s in seeds))
