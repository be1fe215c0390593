"""Serial capture protocol of the sampling microcontroller, plus a mock device.

Frame layout (little-endian)::

    "SCAP" | u16 version | u32 trace_id | u16 n_samples | n_samples x u16 | u16 crc

The CRC is CRC-16/CCITT-FALSE (poly 0x1021, init 0xFFFF, no reflection, no
final xor) over every preceding byte of the frame, magic included.
"""

from __future__ import annotations

import binascii
import math
import struct
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .errors import BadMagicError, ConfigError, CorruptionError, CRCError, JoinError, RangeError, ValidationError
from .sim import LeakageModel, simulate_campaign
from .traces import SecretRecord, Trace, TraceSet, read_csv_rows

FRAME_MAGIC = b"SCAP"
FRAME_VERSION = 1
ADC_MAX = 4095
_FRAME_HEAD = struct.Struct("<4sHIH")
_CRC = struct.Struct("<H")


def crc16_ccitt(data: bytes, init: int = 0xFFFF) -> int:
    # binascii.crc_hqx is the non-reflected 0x1021 CRC; init 0xFFFF makes it CCITT-FALSE
    return binascii.crc_hqx(data, init)


@dataclass(frozen=True)
class AdcCalibration:
    volts_per_count: float = 3.3 / 4096
    offset_volts: float = 0.0

    def __post_init__(self):
        if not (self.volts_per_count > 0 and math.isfinite(self.volts_per_count)):
            raise ConfigError(f"volts_per_count must be positive, got {self.volts_per_count}")
        if not math.isfinite(self.offset_volts):
            raise ConfigError("offset_volts must be finite")

    def to_volts(self, counts) -> np.ndarray:
        return self.offset_volts + np.asarray(counts, dtype=np.float64) * self.volts_per_count

    def to_counts(self, volts) -> tuple[np.ndarray, int]:
        """Nearest ADC codes, clamped to 0..4095, and the number of clamped samples."""
        raw = np.rint((np.asarray(volts, dtype=np.float64) - self.offset_volts) / self.volts_per_count)
        clipped = np.clip(raw, 0, ADC_MAX)
        return clipped.astype(np.uint16), int(np.sum(raw != clipped))

    def meta(self) -> dict[str, str]:
        return {
            "adc_volts_per_count": repr(self.volts_per_count),
            "adc_offset_volts": repr(self.offset_volts),
        }


@dataclass(frozen=True, eq=False)
class CaptureFrame:
    trace_id: int
    adc_samples: np.ndarray
    version: int = FRAME_VERSION
    crc: int | None = None

    def __post_init__(self):
        s = np.array(self.adc_samples, dtype=np.int64)
        if s.ndim != 1 or s.size == 0 or s.size > 0xFFFF:
            raise ValidationError(f"frame {self.trace_id}: need 1..65535 samples, got {s.size}")
        if np.any(s < 0) or np.any(s > ADC_MAX):
            bad = int(np.flatnonzero((s < 0) | (s > ADC_MAX))[0])
            raise RangeError(
                f"frame {self.trace_id}: count {s[bad]} at index {bad} outside 0..{ADC_MAX}",
                trace_id=self.trace_id,
                index=bad,
            )
        if not 0 <= self.trace_id <= 0xFFFFFFFF:
            raise ValidationError(f"trace_id {self.trace_id} does not fit in u32")
        s = s.astype(np.uint16)
        s.flags.writeable = False
        object.__setattr__(self, "adc_samples", s)
        if self.crc is None:
            object.__setattr__(self, "crc", crc16_ccitt(self._body()))

    @property
    def n_samples(self) -> int:
        return self.adc_samples.size

    def _body(self) -> bytes:
        head = _FRAME_HEAD.pack(FRAME_MAGIC, self.version, self.trace_id, self.n_samples)
        return head + self.adc_samples.astype("<u2").tobytes()

    def encode(self) -> bytes:
        return self._body() + _CRC.pack(self.crc)

    def __len__(self) -> int:
        return _FRAME_HEAD.size + 2 * self.n_samples + _CRC.size


def parse_frame(data: bytes, offset: int = 0) -> tuple[CaptureFrame, int]:
    """Decode the frame starting at ``offset``; return it and the offset just past it."""
    data = bytes(data)
    if data[offset : offset + 4] != FRAME_MAGIC:
        nxt = data.find(FRAME_MAGIC, offset + 1)
        raise BadMagicError(
            f"no frame magic at offset {offset}", offset, None if nxt < 0 else nxt
        )
    if offset + _FRAME_HEAD.size > len(data):
        raise CorruptionError(f"truncated frame header at offset {offset}", offset=offset)
    _, version, trace_id, n = _FRAME_HEAD.unpack_from(data, offset)
    end = offset + _FRAME_HEAD.size + 2 * n + _CRC.size
    if end > len(data):
        raise CorruptionError(
            f"truncated frame for trace {trace_id} at offset {offset}: need {end - offset} bytes, "
            f"have {len(data) - offset}",
            offset=offset,
            trace_id=trace_id,
        )
    if version != FRAME_VERSION:
        raise CorruptionError(
            f"unsupported frame version {version} (trace {trace_id})", offset=offset, trace_id=trace_id
        )
    body = data[offset : end - _CRC.size]
    stored = _CRC.unpack_from(data, end - _CRC.size)[0]
    computed = crc16_ccitt(body)
    if stored != computed:
        raise CRCError(
            f"CRC mismatch in frame for trace {trace_id} at offset {offset}: "
            f"stored 0x{stored:04X}, computed 0x{computed:04X}",
            offset=offset,
            trace_id=trace_id,
        )
    if n == 0:
        raise CorruptionError(f"frame for trace {trace_id} has no samples", offset=offset, trace_id=trace_id)
    counts = np.frombuffer(data, dtype="<u2", count=n, offset=offset + _FRAME_HEAD.size)
    if counts.max() > ADC_MAX:
        bad = int(np.argmax(counts > ADC_MAX))
        raise RangeError(
            f"frame for trace {trace_id}: count {counts[bad]} at index {bad} exceeds {ADC_MAX}",
            trace_id=trace_id,
            index=bad,
        )
    return CaptureFrame(trace_id, counts, version, stored), end


def iter_frames(data: bytes) -> Iterator[CaptureFrame]:
    """Decode every frame in a byte stream, skipping bytes before each magic.

    Corrupted frames raise; garbage between frames is ignored.
    """
    data = bytes(data)
    pos = data.find(FRAME_MAGIC)
    while pos >= 0:
        frame, pos = parse_frame(data, pos)
        yield frame
        pos = data.find(FRAME_MAGIC, pos)


def encode_frames(frames: Sequence[CaptureFrame]) -> bytes:
    return b"".join(f.encode() for f in frames)


def frames_to_traceset(
    frames: Sequence[CaptureFrame],
    cal: AdcCalibration,
    sidecar: Sequence[SecretRecord] = (),
    meta: dict[str, str] | None = None,
) -> TraceSet:
    """Convert ADC frames to volts; the calibration is stored in each trace's meta."""
    frames = list(frames)
    if not frames:
        raise ValidationError("no frames to convert")
    n = frames[0].n_samples
    for f in frames:
        if f.n_samples != n:
            raise ValidationError(
                f"ragged capture: frame {f.trace_id} has {f.n_samples} samples, expected {n}",
                trace_id=f.trace_id,
            )
    tmeta = {"source": "adc_frames", **cal.meta()}
    traces = tuple(Trace(f.trace_id, cal.to_volts(f.adc_samples), tmeta) for f in frames)
    ids = {t.trace_id for t in traces}
    for r in sidecar:
        if r.trace_id not in ids:
            raise JoinError(f"sidecar references trace {r.trace_id} with no frame", trace_id=r.trace_id)
    return TraceSet(traces, n, tuple(sidecar), meta or {})


def csv_counts_to_traceset(stream, cal: AdcCalibration, sidecar: Sequence[SecretRecord] = ()) -> TraceSet:
    """Read a sample CSV holding raw integer ADC counts and convert to volts."""
    ids, fields = read_csv_rows(stream)
    frames = []
    for tid, row in zip(ids, fields):
        try:
            counts = [int(v) for v in row]
        except ValueError:
            raise ValidationError(f"trace {tid}: ADC counts must be integers", trace_id=tid) from None
        frames.append(CaptureFrame(tid, counts))
    ts = frames_to_traceset(frames, cal, sidecar)
    return TraceSet(
        tuple(Trace(t.trace_id, t.samples, {**t.meta, "source": "adc_csv"}) for t in ts.traces),
        ts.samples_per_trace,
        ts.label_sidecar,
    )


@dataclass(frozen=True, eq=False)
class MockCapture:
    """What the mock sampler emits, plus the ground truth a real rig would log separately."""

    stream: bytes
    sidecar: tuple[SecretRecord, ...]
    saturated: dict[int, int] = field(default_factory=dict)  # trace_id -> clamped samples
    meta: dict[str, str] = field(default_factory=dict)


def quantize_campaign(ts: TraceSet, cal: AdcCalibration) -> tuple[list[CaptureFrame], dict[int, int]]:
    frames, saturated = [], {}
    for t in ts.traces:
        counts, clamped = cal.to_counts(t.samples)
        if clamped:
            saturated[t.trace_id] = clamped
        frames.append(CaptureFrame(t.trace_id, counts))
    return frames, saturated


def mock_device(model: LeakageModel, n_traces: int, cal: AdcCalibration | None = None) -> MockCapture:
    """Simulate a campaign and emit it as the sampler's frame stream."""
    cal = cal or AdcCalibration()
    ts = simulate_campaign(n_traces, model)
    frames, saturated = quantize_campaign(ts, cal)
    meta = {"seed": str(model.seed), "saturated_samples": str(sum(saturated.values()))}
    return MockCapture(encode_frames(frames), ts.label_sidecar, saturated, meta)
