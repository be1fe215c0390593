import io
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from decapleak.acquisition import (
    AdcCalibration,
    CaptureFrame,
    crc16_ccitt,
    csv_counts_to_traceset,
    encode_frames,
    frames_to_traceset,
    iter_frames,
    mock_device,
    parse_frame,
    quantize_campaign,
)
from decapleak.errors import (
    BadMagicError,
    ConfigError,
    CorruptionError,
    CRCError,
    JoinError,
    RangeError,
    ValidationError,
)
from decapleak.sim import LeakageModel, LeakWindow, preset, simulate_campaign
from decapleak.traces import SecretRecord


def crc_bitwise(data: bytes) -> int:
    crc = 0xFFFF
    for byte in data:
        crc ^= byte << 8
        for _ in range(8):
            crc = ((crc << 1) ^ 0x1021) if crc & 0x8000 else crc << 1
            crc &= 0xFFFF
    return crc


def test_crc_check_value():
    assert crc16_ccitt(b"123456789") == 0x29B1


@settings(max_examples=200)
@given(st.binary(max_size=200))
def test_crc_matches_bitwise_oracle(data):
    assert crc16_ccitt(data) == crc_bitwise(data)


def test_four_sample_frame_layout():
    f = CaptureFrame(0x01020304, [0, 1, 4095, 2048])
    raw = f.encode()
    assert raw[:4] == b"SCAP"
    assert struct.unpack_from("<HIH", raw, 4) == (1, 0x01020304, 4)
    assert len(raw) == len(f) == 12 + 8 + 2
    assert struct.unpack_from("<H", raw, len(raw) - 2)[0] == crc_bitwise(raw[:-2])
    back, end = parse_frame(raw)
    assert end == len(raw)
    assert back.trace_id == f.trace_id and back.adc_samples.tolist() == [0, 1, 4095, 2048]


def test_flipped_payload_byte():
    raw = bytearray(CaptureFrame(77, [10, 20, 30]).encode())
    raw[13] ^= 0x40
    with pytest.raises(CRCError) as exc:
        parse_frame(bytes(raw))
    assert exc.value.trace_id == 77
    assert "77" in str(exc.value)


def test_three_frames_and_resync():
    frames = [CaptureFrame(i, [i, i + 1]) for i in (5, 9, 2)]
    stream = encode_frames(frames)
    assert [f.trace_id for f in iter_frames(stream)] == [5, 9, 2]
    # each frame is 12 + 4 + 2 bytes; garbage goes between frames
    noisy = b"\x00\xffjunk" + stream[:18] + b"xx" + stream[18:]
    assert [f.trace_id for f in iter_frames(noisy)] == [5, 9, 2]


def test_bad_magic_gives_resync_hint():
    stream = b"garbage" + CaptureFrame(1, [1]).encode()
    with pytest.raises(BadMagicError) as exc:
        parse_frame(stream)
    assert exc.value.resync_offset == 7


def test_truncated_and_bad_version():
    raw = CaptureFrame(3, [1, 2, 3]).encode()
    with pytest.raises(CorruptionError):
        parse_frame(raw[:-1])
    bad = bytearray(raw)
    bad[4] = 2
    with pytest.raises(CorruptionError):
        parse_frame(bytes(bad))


def test_count_out_of_range():
    with pytest.raises(RangeError):
        CaptureFrame(0, [4096])
    # a frame with a valid CRC but an over-range count
    body = struct.pack("<4sHIH", b"SCAP", 1, 8, 2) + struct.pack("<HH", 5, 5000)
    raw = body + struct.pack("<H", crc_bitwise(body))
    with pytest.raises(RangeError) as exc:
        parse_frame(raw)
    assert exc.value.trace_id == 8 and exc.value.index == 1


@settings(max_examples=100)
@given(st.integers(0, 2**32 - 1), st.lists(st.integers(0, 4095), min_size=1, max_size=100))
def test_frame_round_trip(tid, counts):
    raw = CaptureFrame(tid, counts).encode()
    frame, _ = parse_frame(raw)
    assert frame.encode() == raw


def test_calibration_examples():
    cal = AdcCalibration(0.000805, 0.0)
    assert cal.to_volts([0])[0] == 0.0
    assert cal.to_volts([4095])[0] == pytest.approx(3.297, abs=1e-3)
    assert AdcCalibration().to_volts([4095])[0] == pytest.approx(4095 * 3.3 / 4096, abs=1e-12)
    with pytest.raises(ConfigError):
        AdcCalibration(0.0)


def test_frames_to_traceset_meta_and_errors():
    cal = AdcCalibration()
    frames = [CaptureFrame(0, [0, 4095]), CaptureFrame(1, [2048, 1])]
    ts = frames_to_traceset(frames, cal, [SecretRecord(0, b"\x01"), SecretRecord(1, b"\x02")])
    assert ts.traces[0].meta["source"] == "adc_frames"
    assert float(ts.traces[0].meta["adc_volts_per_count"]) == cal.volts_per_count
    with pytest.raises(ValidationError):
        frames_to_traceset([CaptureFrame(0, [1, 2]), CaptureFrame(1, [1])], cal)
    with pytest.raises(JoinError):
        frames_to_traceset(frames, cal, [SecretRecord(0, b"\x01"), SecretRecord(4, b"\x02")])


def test_csv_counts():
    text = "trace_id,s0,s1\n0,0,4095\n1,10,20\n"
    ts = csv_counts_to_traceset(io.StringIO(text), AdcCalibration(0.001, 0.5))
    assert ts.matrix.tolist() == [[0.5, 0.5 + 4.095], [0.51, 0.52]]
    with pytest.raises(ValidationError):
        csv_counts_to_traceset(io.StringIO("trace_id,s0\n0,1.5\n"), AdcCalibration())


def test_mock_device_round_trip():
    model = preset("paper_like", seed=3)
    cal = AdcCalibration()
    cap = mock_device(model, 250, cal)
    frames = list(iter_frames(cap.stream))
    assert [f.trace_id for f in frames] == list(range(250))
    decoded = frames_to_traceset(frames, cal, cap.sidecar)
    campaign = simulate_campaign(250, model)
    expected, _ = quantize_campaign(campaign, cal)
    assert np.array_equal(decoded.matrix, np.array([cal.to_volts(f.adc_samples) for f in expected]))
    assert np.max(np.abs(decoded.matrix - campaign.matrix)) <= cal.volts_per_count / 2 + 1e-15
    assert cap.stream == mock_device(model, 250, cal).stream


def test_saturation_recorded():
    model = LeakageModel(samples_per_trace=20, baseline=3.5)
    cap = mock_device(model, 3)
    assert cap.saturated == {0: 20, 1: 20, 2: 20}
    assert cap.meta["saturated_samples"] == "60"
    frames = list(iter_frames(cap.stream))
    assert all(int(f.adc_samples.max()) == 4095 for f in frames)


@settings(max_examples=25, deadline=None)
@given(
    st.floats(0.2, 3.0),
    st.floats(0.0, 0.2),
    st.floats(1e-4, 2e-3),
    st.integers(0, 2**32),
)
def test_quantization_bound(baseline, alpha, vpc, seed):
    model = LeakageModel(
        samples_per_trace=30,
        baseline=baseline,
        windows=(LeakWindow(0, 15, 6, alpha),),
        noise_sigma=0.01,
        seed=seed,
    )
    cal = AdcCalibration(vpc, 0.0)
    ts = simulate_campaign(4, model)
    frames, saturated = quantize_campaign(ts, cal)
    for f, t in zip(frames, ts.traces):
        if f.trace_id in saturated:
            continue
        err = np.abs(cal.to_volts(f.adc_samples) - t.samples)
        assert np.all(err <= vpc / 2 + 1e-12)
