"""Synthetic device under test.

Each trace is a baseline voltage plus optional slow sinusoidal drift, plus
Hamming-weight leakage localised in one or more windows, plus i.i.d.
Gaussian noise:

    v[t] = baseline + drift(t) + sum_w alpha_w * HW(target_w) * shape_w(t) + eps_t

Randomness for trace ``i`` comes from a PCG64 stream seeded with
``(model.seed, i)``, so campaigns are reproducible and independent of how
traces are distributed over workers.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Any, Mapping

import numpy as np

from .errors import ConfigError
from .stats import HW_TABLE
from .traces import SecretRecord, Trace, TraceSet

SHAPES = ("rect", "gaussian")

# Noise level of the "paper_like" preset. Fixed by scripts/calibrate_paper_like.py:
# with seed 1 and 250 traces the peak |rho| against HW(last byte) is 0.5836.
PAPER_LIKE_SIGMA = 0.024


@dataclass(frozen=True)
class LeakWindow:
    """A region of the trace whose amplitude scales with the HW of one secret byte."""

    byte_index: int
    center: int
    width: int
    alpha: float
    shape: str = "gaussian"
    bit_index: int | None = None  # set: leak this single bit instead of the byte's HW

    def __post_init__(self):
        if self.byte_index < 0:
            raise ConfigError(f"window byte_index must be >= 0, got {self.byte_index}")
        if self.width < 1:
            raise ConfigError(f"window width must be >= 1, got {self.width}")
        if not math.isfinite(self.alpha):
            raise ConfigError("window alpha must be finite")
        if self.bit_index is not None and not 0 <= self.bit_index <= 7:
            raise ConfigError(f"window bit_index must be in 0..7, got {self.bit_index}")
        if self.shape not in SHAPES:
            raise ConfigError(f"unknown window shape {self.shape!r}; expected one of {SHAPES}")

    def weight(self, byte: int) -> int:
        if self.bit_index is None:
            return int(HW_TABLE[byte])
        return (byte >> self.bit_index) & 1

    def profile(self, n: int) -> np.ndarray:
        t = np.arange(n, dtype=np.float64)
        half = self.width / 2
        if self.shape == "rect":
            return ((t >= self.center - half) & (t < self.center + half)).astype(np.float64)
        return np.exp(-((t - self.center) ** 2) / (2 * half**2))


@dataclass(frozen=True)
class LeakageModel:
    samples_per_trace: int = 1500
    baseline: float = 1.0
    windows: tuple[LeakWindow, ...] = ()
    noise_sigma: float = 0.0
    drift_amplitude: float = 0.0
    drift_period: float | None = None  # samples; None means one full trace
    secret_len: int = 32
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "windows", tuple(self.windows))
        if self.samples_per_trace < 1:
            raise ConfigError(f"samples_per_trace must be >= 1, got {self.samples_per_trace}")
        if not (self.noise_sigma >= 0 and math.isfinite(self.noise_sigma)):
            raise ConfigError(f"noise_sigma must be finite and >= 0, got {self.noise_sigma}")
        if not math.isfinite(self.baseline) or not math.isfinite(self.drift_amplitude):
            raise ConfigError("baseline and drift_amplitude must be finite")
        if self.drift_period is not None and not self.drift_period > 0:
            raise ConfigError(f"drift_period must be positive, got {self.drift_period}")
        if self.secret_len < 1:
            raise ConfigError(f"secret_len must be >= 1, got {self.secret_len}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        for w in self.windows:
            if not 0 <= w.center < self.samples_per_trace:
                raise ConfigError(
                    f"window center {w.center} outside 0..{self.samples_per_trace - 1}"
                )

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "LeakageModel":
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown model fields: {sorted(unknown)}")
        kwargs = dict(doc)
        try:
            kwargs["windows"] = tuple(LeakWindow(**w) for w in doc.get("windows", ()))
        except TypeError as exc:
            raise ConfigError(f"bad window definition: {exc}") from None
        return cls(**kwargs)

    @classmethod
    def from_json(cls, text: str) -> "LeakageModel":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"model JSON is malformed: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError("model JSON must be an object")
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["windows"] = [
            {k: v for k, v in asdict(w).items() if not (k == "bit_index" and v is None)} for w in self.windows
        ]
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def leakage_profile(self) -> np.ndarray:
        """``(n_windows, samples_per_trace)`` matrix of window shapes."""
        if not self.windows:
            return np.zeros((0, self.samples_per_trace))
        return np.stack([w.profile(self.samples_per_trace) for w in self.windows])


def trace_rng(seed: int, trace_id: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, trace_id])))


def generate_secret(rng: np.random.Generator, length: int) -> bytes:
    if length < 1:
        raise ConfigError(f"secret length must be >= 1, got {length}")
    return rng.bytes(length)


def simulate_trace(
    secret: bytes,
    model: LeakageModel,
    rng: np.random.Generator,
    trace_id: int = 0,
    _profile: np.ndarray | None = None,
) -> Trace:
    """One synthetic trace for ``secret``.

    Consumes exactly one uniform (drift phase) and ``samples_per_trace``
    normals from ``rng`` regardless of the model's noise and drift settings.
    """
    n = model.samples_per_trace
    for w in model.windows:
        if w.byte_index >= len(secret):
            raise ConfigError(
                f"window targets byte_index {w.byte_index} but the secret has {len(secret)} bytes"
            )
    profile = model.leakage_profile() if _profile is None else _profile

    phase = rng.uniform(0.0, 2 * math.pi)
    noise = rng.normal(0.0, 1.0, n) * model.noise_sigma

    t = np.arange(n, dtype=np.float64)
    period = model.drift_period or n
    v = model.baseline + model.drift_amplitude * np.sin(2 * math.pi * t / period + phase)
    leak = np.zeros(n)
    for w, shape in zip(model.windows, profile):
        leak += w.alpha * w.weight(secret[len(secret) - 1 - w.byte_index]) * shape
    v = v + leak
    v = v + noise
    return Trace(trace_id, v)


def _one(model: LeakageModel, profile: np.ndarray, trace_id: int) -> tuple[Trace, bytes]:
    rng = trace_rng(model.seed, trace_id)
    secret = generate_secret(rng, model.secret_len)
    return simulate_trace(secret, model, rng, trace_id, profile), secret


def simulate_campaign(n_traces: int, model: LeakageModel, jobs: int = 1) -> TraceSet:
    """``n_traces`` independent (secret, trace) pairs with ids ``0..n_traces-1``."""
    if n_traces < 1:
        raise ConfigError(f"n_traces must be >= 1, got {n_traces}")
    profile = model.leakage_profile()
    ids = range(n_traces)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            pairs = list(pool.map(lambda i: _one(model, profile, i), ids))
    else:
        pairs = [_one(model, profile, i) for i in ids]
    traces = tuple(p[0] for p in pairs)
    sidecar = tuple(SecretRecord(t.trace_id, s) for t, (_, s) in zip(traces, pairs))
    meta = {"source": "simulator", "seed": str(model.seed), "model": model.to_json()}
    return TraceSet(traces, model.samples_per_trace, sidecar, meta)


def preset(name: str, seed: int = 0) -> LeakageModel:
    """Named leakage models.

    ``noiseless``: one gaussian window (center 750, width 40, alpha 0.01), no noise.
    ``paper_like``: the same window with ``PAPER_LIKE_SIGMA`` noise.
    ``pure_noise``: no leakage, sigma 0.002.
    """
    window = LeakWindow(byte_index=0, center=750, width=40, alpha=0.01, shape="gaussian")
    if name == "noiseless":
        return LeakageModel(windows=(window,), noise_sigma=0.0, seed=seed)
    if name == "paper_like":
        return LeakageModel(windows=(window,), noise_sigma=PAPER_LIKE_SIGMA, seed=seed)
    if name == "pure_noise":
        return LeakageModel(windows=(), noise_sigma=0.002, seed=seed)
    raise ConfigError(f"unknown preset {name!r}; expected noiseless, paper_like or pure_noise")


PRESETS = ("noiseless", "paper_like", "pure_noise")
