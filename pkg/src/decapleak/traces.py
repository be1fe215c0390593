"""Trace domain types and their on-disk representations.

Two formats are supported:

* ``LSC1`` container (binary, little-endian)::

      "LSC1" | u32 n_traces | u32 samples_per_trace | u32 secret_len
      n_traces  x (u32 trace_id | samples_per_trace x f64)
      sidecar   x (u32 trace_id | secret_len bytes)        # absent if secret_len == 0
      [ "LSCM" | u32 json_len | json ]                     # optional metadata trailer

  The trailer is only written when the set or one of its traces carries
  metadata, so a metadata-free file is exactly header + records + sidecar.

* CSV interchange: ``trace_id,s0,...,s{N-1}`` for samples and
  ``trace_id,secret_hex`` for the sidecar.
"""

from __future__ import annotations

import csv
import io
import json
import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import BinaryIO, Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    BoundsError,
    ConfigError,
    CorruptionError,
    FormatError,
    InputError,
    JoinError,
    TraceIOError,
    ValidationError,
)
from .stats import hamming_weight

CONTAINER_MAGIC = b"LSC1"
META_MAGIC = b"LSCM"
_HEADER = struct.Struct("<4sIII")
_U32 = struct.Struct("<I")
_F64 = np.dtype("<f8")

LABEL_KINDS = ("single_bit", "bit_pair", "hamming_weight")


def _frozen_samples(samples) -> np.ndarray:
    arr = np.array(samples, dtype=np.float64, copy=True)
    if arr.ndim != 1:
        raise ValidationError(f"samples must be one-dimensional, got shape {arr.shape}")
    arr.flags.writeable = False
    return arr


def _check_finite(trace_id: int, samples: np.ndarray) -> None:
    bad = np.flatnonzero(~np.isfinite(samples))
    if bad.size:
        i = int(bad[0])
        raise ValidationError(
            f"trace {trace_id}: non-finite sample {samples[i]!r} at index {i}",
            trace_id=trace_id,
            index=i,
        )


@dataclass(frozen=True, eq=False)
class Trace:
    """Voltage samples of a single decapsulation."""

    trace_id: int
    samples: np.ndarray
    meta: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if int(self.trace_id) != self.trace_id or self.trace_id < 0:
            raise ValidationError(f"trace_id must be a non-negative integer, got {self.trace_id!r}")
        object.__setattr__(self, "trace_id", int(self.trace_id))
        samples = _frozen_samples(self.samples)
        if samples.size == 0:
            raise ValidationError(f"trace {self.trace_id}: samples are empty", trace_id=self.trace_id)
        _check_finite(self.trace_id, samples)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "meta", {str(k): str(v) for k, v in dict(self.meta).items()})

    def __len__(self) -> int:
        return self.samples.size

    def __eq__(self, other):
        if not isinstance(other, Trace):
            return NotImplemented
        return (
            self.trace_id == other.trace_id
            and self.samples.shape == other.samples.shape
            and self.samples.tobytes() == other.samples.tobytes()
            and dict(self.meta) == dict(other.meta)
        )

    __hash__ = None


@dataclass(frozen=True)
class SecretRecord:
    """Shared secret bytes produced alongside trace ``trace_id``."""

    trace_id: int
    secret: bytes

    def __post_init__(self):
        if int(self.trace_id) != self.trace_id or self.trace_id < 0:
            raise ValidationError(f"trace_id must be a non-negative integer, got {self.trace_id!r}")
        object.__setattr__(self, "trace_id", int(self.trace_id))
        object.__setattr__(self, "secret", bytes(self.secret))
        if not self.secret:
            raise ValidationError(f"secret of trace {self.trace_id} is empty", trace_id=self.trace_id)


@dataclass(frozen=True, eq=False)
class TraceSet:
    """Aligned traces with an optional secret sidecar.

    The sidecar is either empty or holds exactly one record per trace,
    joined on ``trace_id``.
    """

    traces: tuple[Trace, ...]
    samples_per_trace: int
    label_sidecar: tuple[SecretRecord, ...] = ()
    meta: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        traces = tuple(self.traces)
        sidecar = tuple(self.label_sidecar)
        object.__setattr__(self, "traces", traces)
        object.__setattr__(self, "label_sidecar", sidecar)
        object.__setattr__(self, "meta", {str(k): str(v) for k, v in dict(self.meta).items()})
        if not traces:
            raise ValidationError("a trace set needs at least one trace")
        if self.samples_per_trace < 1:
            raise ValidationError(f"samples_per_trace must be positive, got {self.samples_per_trace}")
        for t in traces:
            if len(t) != self.samples_per_trace:
                raise ValidationError(
                    f"trace {t.trace_id} has {len(t)} samples, expected {self.samples_per_trace}",
                    trace_id=t.trace_id,
                )
        ids = [t.trace_id for t in traces]
        if len(set(ids)) != len(ids):
            raise ValidationError("trace ids are not unique")
        if sidecar:
            side_ids = [r.trace_id for r in sidecar]
            if len(side_ids) != len(ids) or set(side_ids) != set(ids):
                missing = sorted(set(ids) - set(side_ids))
                extra = sorted(set(side_ids) - set(ids))
                raise JoinError(
                    f"sidecar ids do not match trace ids (missing={missing[:5]}, unknown={extra[:5]})"
                )
            if len(set(side_ids)) != len(side_ids):
                raise JoinError("duplicate trace ids in sidecar")

    @classmethod
    def from_matrix(
        cls,
        matrix,
        trace_ids: Sequence[int] | None = None,
        secrets: Sequence[bytes] | None = None,
        meta: Mapping[str, str] | None = None,
        trace_meta: Sequence[Mapping[str, str]] | None = None,
    ) -> "TraceSet":
        """Build a set from a 2-D sample matrix, one row per trace."""
        m = np.asarray(matrix, dtype=np.float64)
        if m.ndim != 2:
            raise ValidationError(f"expected a 2-D matrix, got shape {m.shape}")
        ids = list(range(m.shape[0])) if trace_ids is None else [int(i) for i in trace_ids]
        if len(ids) != m.shape[0]:
            raise ValidationError("trace_ids length differs from matrix rows")
        tmeta = trace_meta if trace_meta is not None else [{}] * len(ids)
        traces = tuple(Trace(tid, row, tm) for tid, row, tm in zip(ids, m, tmeta))
        sidecar = ()
        if secrets is not None:
            if len(secrets) != len(ids):
                raise JoinError("secrets length differs from matrix rows")
            sidecar = tuple(SecretRecord(tid, s) for tid, s in zip(ids, secrets))
        return cls(traces, m.shape[1], sidecar, meta or {})

    def __len__(self) -> int:
        return len(self.traces)

    @property
    def trace_ids(self) -> list[int]:
        return [t.trace_id for t in self.traces]

    @property
    def has_sidecar(self) -> bool:
        return bool(self.label_sidecar)

    @cached_property
    def matrix(self) -> np.ndarray:
        """Read-only ``n_traces x samples_per_trace`` array in trace order."""
        m = np.stack([t.samples for t in self.traces])
        m.flags.writeable = False
        return m

    @cached_property
    def _secret_index(self) -> dict[int, bytes]:
        return {r.trace_id: r.secret for r in self.label_sidecar}

    def secret_for(self, trace_id: int) -> bytes:
        try:
            return self._secret_index[trace_id]
        except KeyError:
            raise JoinError(f"no secret recorded for trace {trace_id}", trace_id=trace_id) from None

    def labels(self, spec: "LabelSpec") -> np.ndarray:
        """Class labels for every trace, in trace order."""
        if not self.label_sidecar:
            raise InputError("trace set has no secret sidecar")
        return np.array(
            [extract_label(SecretRecord(tid, self.secret_for(tid)), spec) for tid in self.trace_ids],
            dtype=np.int64,
        )

    def sorted_by_id(self) -> "TraceSet":
        traces = tuple(sorted(self.traces, key=lambda t: t.trace_id))
        sidecar = tuple(sorted(self.label_sidecar, key=lambda r: r.trace_id))
        return TraceSet(traces, self.samples_per_trace, sidecar, self.meta)

    def __eq__(self, other):
        if not isinstance(other, TraceSet):
            return NotImplemented
        return (
            self.samples_per_trace == other.samples_per_trace
            and self.traces == other.traces
            and set(self.label_sidecar) == set(other.label_sidecar)
            and dict(self.meta) == dict(other.meta)
        )

    __hash__ = None


@dataclass(frozen=True)
class LabelSpec:
    """Which part of the secret becomes the class label.

    ``byte_index`` counts from the end of the secret (0 is the last byte).
    A ``bit_pair`` label is ``bit[bit_index + 1] * 2 + bit[bit_index]``.
    """

    kind: str = "single_bit"
    byte_index: int = 0
    bit_index: int = 0

    def __post_init__(self):
        if self.kind not in LABEL_KINDS:
            raise ConfigError(f"unknown label kind {self.kind!r}; expected one of {LABEL_KINDS}")
        if self.byte_index < 0:
            raise ConfigError(f"byte_index must be >= 0, got {self.byte_index}")
        top = 6 if self.kind == "bit_pair" else 7
        if not 0 <= self.bit_index <= top:
            raise ConfigError(f"bit_index for {self.kind} must be in 0..{top}, got {self.bit_index}")

    @property
    def n_classes(self) -> int:
        return {"single_bit": 2, "bit_pair": 4, "hamming_weight": 9}[self.kind]

    @property
    def classes(self) -> tuple[int, ...]:
        return tuple(range(self.n_classes))

    def describe(self) -> str:
        if self.kind == "hamming_weight":
            return f"HW(byte[-{self.byte_index + 1}])"
        if self.kind == "bit_pair":
            return f"bits {self.bit_index + 1}:{self.bit_index} of byte[-{self.byte_index + 1}]"
        return f"bit {self.bit_index} of byte[-{self.byte_index + 1}]"


def extract_label(record: SecretRecord, spec: LabelSpec) -> int:
    secret = record.secret
    if spec.byte_index >= len(secret):
        raise BoundsError(
            f"byte_index {spec.byte_index} out of range for a {len(secret)}-byte secret "
            f"(trace {record.trace_id})"
        )
    b = secret[len(secret) - 1 - spec.byte_index]
    if spec.kind == "hamming_weight":
        return hamming_weight(b)
    lo = (b >> spec.bit_index) & 1
    if spec.kind == "single_bit":
        return lo
    hi = (b >> (spec.bit_index + 1)) & 1
    return hi * 2 + lo


# -- container ----------------------------------------------------------------


def _meta_trailer(ts: TraceSet) -> bytes:
    tmeta = {str(t.trace_id): dict(t.meta) for t in ts.traces if t.meta}
    if not ts.meta and not tmeta:
        return b""
    doc = json.dumps({"set": dict(ts.meta), "traces": tmeta}, sort_keys=True, separators=(",", ":"))
    body = doc.encode("utf-8")
    return META_MAGIC + _U32.pack(len(body)) + body


def container_size(n_traces: int, samples_per_trace: int, secret_len: int) -> int:
    """Size in bytes of a metadata-free container."""
    size = _HEADER.size + n_traces * (_U32.size + 8 * samples_per_trace)
    if secret_len:
        size += n_traces * (_U32.size + secret_len)
    return size


def trace_set_write(ts: TraceSet, sink: BinaryIO) -> int:
    """Write ``ts`` as an LSC1 container and return the number of bytes written."""
    if not isinstance(ts, TraceSet):
        raise ValidationError("trace_set_write expects a TraceSet")
    secret_len = 0
    if ts.label_sidecar:
        lengths = {len(r.secret) for r in ts.label_sidecar}
        if len(lengths) != 1:
            raise ValidationError(f"container needs one secret length, found {sorted(lengths)}")
        secret_len = lengths.pop()

    position = 0

    def emit(chunk: bytes) -> None:
        nonlocal position
        try:
            n = sink.write(chunk)
        except OSError as exc:
            raise TraceIOError(f"write failed at byte {position}: {exc}", position) from exc
        if n is not None and n != len(chunk):
            raise TraceIOError(f"short write at byte {position + (n or 0)}", position + (n or 0))
        position += len(chunk)

    emit(_HEADER.pack(CONTAINER_MAGIC, len(ts), ts.samples_per_trace, secret_len))
    for t in ts.traces:
        emit(_U32.pack(t.trace_id) + t.samples.astype(_F64, copy=False).tobytes())
    for r in ts.label_sidecar:
        emit(_U32.pack(r.trace_id) + r.secret)
    trailer = _meta_trailer(ts)
    if trailer:
        emit(trailer)
    return position


def _need(data: bytes, offset: int, n: int, what: str) -> None:
    if offset + n > len(data):
        raise CorruptionError(
            f"truncated container: {what} needs {n} bytes at offset {offset}, "
            f"only {len(data) - offset} left",
            offset=offset,
        )


def _read_container(data: bytes) -> TraceSet:
    _need(data, 0, _HEADER.size, "header")
    _, n_traces, spt, secret_len = _HEADER.unpack_from(data, 0)
    if spt == 0:
        raise CorruptionError("samples_per_trace is zero", offset=8)
    if n_traces == 0:
        raise CorruptionError("container holds no traces", offset=4)
    off = _HEADER.size
    ids, rows = [], []
    rec = 8 * spt
    for _ in range(n_traces):
        _need(data, off, _U32.size + rec, "trace record")
        tid = _U32.unpack_from(data, off)[0]
        row = np.frombuffer(data, dtype=_F64, count=spt, offset=off + _U32.size)
        _check_finite(tid, row)
        ids.append(tid)
        rows.append(row)
        off += _U32.size + rec
    secrets: dict[int, bytes] = {}
    side_order: list[int] = []
    if secret_len:
        for _ in range(n_traces):
            _need(data, off, _U32.size + secret_len, "sidecar record")
            tid = _U32.unpack_from(data, off)[0]
            secrets[tid] = data[off + _U32.size : off + _U32.size + secret_len]
            side_order.append(tid)
            off += _U32.size + secret_len
        if len(secrets) != len(side_order):
            raise CorruptionError("duplicate trace id in sidecar", offset=off)
    set_meta: dict = {}
    trace_meta: dict = {}
    if off < len(data):
        if data[off : off + 4] != META_MAGIC:
            raise CorruptionError(f"unexpected trailing bytes at offset {off}", offset=off)
        _need(data, off + 4, _U32.size, "metadata length")
        n = _U32.unpack_from(data, off + 4)[0]
        _need(data, off + 8, n, "metadata body")
        try:
            doc = json.loads(data[off + 8 : off + 8 + n].decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CorruptionError(f"unreadable metadata trailer at offset {off}: {exc}", offset=off) from exc
        set_meta = doc.get("set", {})
        trace_meta = doc.get("traces", {})
        if off + 8 + n != len(data):
            raise CorruptionError(f"unexpected trailing bytes at offset {off + 8 + n}", offset=off + 8 + n)
    traces = tuple(Trace(tid, row, trace_meta.get(str(tid), {})) for tid, row in zip(ids, rows))
    sidecar = tuple(SecretRecord(tid, secrets[tid]) for tid in side_order)
    return TraceSet(traces, spt, sidecar, set_meta)


# -- CSV interchange ------------------------------------------------------------


def write_csv(ts: TraceSet, stream) -> None:
    """Write samples as ``trace_id,s0,...``; floats use round-trip ``repr``."""
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(["trace_id"] + [f"s{i}" for i in range(ts.samples_per_trace)])
    for t in ts.traces:
        w.writerow([t.trace_id] + [repr(float(v)) for v in t.samples])


def write_sidecar_csv(records: Iterable[SecretRecord], stream) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(["trace_id", "secret_hex"])
    for r in records:
        w.writerow([r.trace_id, r.secret.hex()])


def _parse_int(text: str, where: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise FormatError(f"{where}: trace_id {text!r} is not an integer") from None
    if v < 0:
        raise FormatError(f"{where}: trace_id {v} is negative")
    return v


def read_sidecar_csv(stream) -> list[SecretRecord]:
    rows = csv.reader(stream)
    header = next(rows, None)
    if header is None or [h.strip() for h in header] != ["trace_id", "secret_hex"]:
        raise FormatError("sidecar CSV must start with 'trace_id,secret_hex'")
    out = []
    for lineno, row in enumerate(rows, start=2):
        if not row:
            continue
        if len(row) != 2:
            raise FormatError(f"sidecar line {lineno}: expected 2 fields, got {len(row)}")
        tid = _parse_int(row[0], f"sidecar line {lineno}")
        try:
            secret = bytes.fromhex(row[1].strip())
        except ValueError:
            raise FormatError(f"sidecar line {lineno}: invalid hex") from None
        out.append(SecretRecord(tid, secret))
    return out


def read_csv_rows(stream) -> tuple[list[int], list[list[str]]]:
    """Parse the sample CSV into ids and raw text fields, checking shape."""
    rows = csv.reader(stream)
    header = next(rows, None)
    if not header or header[0].strip() != "trace_id" or len(header) < 2:
        raise FormatError("sample CSV must start with 'trace_id,s0,...'")
    expected = [f"s{i}" for i in range(len(header) - 1)]
    if [h.strip() for h in header[1:]] != expected:
        raise FormatError("sample CSV header columns must be s0..s{N-1} in order")
    ids, fields = [], []
    for lineno, row in enumerate(rows, start=2):
        if not row:
            continue
        if len(row) != len(header):
            tid = row[0] if row else "?"
            raise ValidationError(
                f"line {lineno} (trace {tid}): {len(row) - 1} samples, expected {len(header) - 1}"
            )
        ids.append(_parse_int(row[0], f"line {lineno}"))
        fields.append(row[1:])
    if not ids:
        raise FormatError("sample CSV holds no traces")
    return ids, fields


def _read_csv(text: str, sidecar: Sequence[SecretRecord] | None) -> TraceSet:
    ids, fields = read_csv_rows(io.StringIO(text))
    traces = []
    for tid, row in zip(ids, fields):
        try:
            values = [float(v) for v in row]
        except ValueError as exc:
            raise ValidationError(f"trace {tid}: {exc}", trace_id=tid) from None
        traces.append(Trace(tid, values))
    return TraceSet(tuple(traces), len(fields[0]), tuple(sidecar or ()))


def trace_set_read(source: BinaryIO | bytes, sidecar: Sequence[SecretRecord] | None = None) -> TraceSet:
    """Read a container or a sample CSV, detected from the leading bytes.

    ``sidecar`` only applies to CSV input; containers carry their own.
    """
    data = source if isinstance(source, (bytes, bytearray, memoryview)) else source.read()
    data = bytes(data)
    if data[:4] == CONTAINER_MAGIC:
        return _read_container(data)
    text_start = data[:8].lstrip(b"\xef\xbb\xbf")
    if text_start.startswith(b"trace_id"):
        return _read_csv(data.decode("utf-8-sig"), sidecar)
    raise FormatError(f"unrecognised magic {data[:4]!r}; expected {CONTAINER_MAGIC!r} or a CSV header")


def save(ts: TraceSet, path: str | Path) -> int:
    with open(path, "wb") as fh:
        return trace_set_write(ts, fh)


def load(path: str | Path, sidecar_path: str | Path | None = None) -> TraceSet:
    sidecar = None
    if sidecar_path is not None:
        with open(sidecar_path, newline="") as fh:
            sidecar = read_sidecar_csv(fh)
    with open(path, "rb") as fh:
        return trace_set_read(fh, sidecar)

