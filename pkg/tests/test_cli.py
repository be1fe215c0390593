import io
import json
import xml.etree.ElementTree as ET
from contextlib import redirect_stderr, redirect_stdout

import jsonschema
import numpy as np
import pytest

from conftest import per_bit_model
from decapleak import cli
from decapleak.acquisition import AdcCalibration, iter_frames, mock_device, quantize_campaign
from decapleak.report import load_schema
from decapleak.sim import preset, simulate_campaign
from decapleak.traces import TraceSet, load, write_csv, write_sidecar_csv

SVG = "{http://www.w3.org/2000/svg}"


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    with redirect_stdout(out), redirect_stderr(err):
        code = cli.main([str(a) for a in argv])
    return code, out.getvalue(), err.getvalue()


@pytest.fixture
def calibrated_run(tmp_path):
    path = tmp_path / "run.lsc"
    assert run("simulate", "--preset", "paper_like", "--traces", 250, "--out", path, "--seed", 1)[0] == 0
    return path


def test_simulate_geometry_and_repeatability(tmp_path, calibrated_run):
    ts = load(calibrated_run)
    assert ts.matrix.shape == (250, 1500)
    assert ts.meta["seed"] == "1"
    again = tmp_path / "again.lsc"
    run("simulate", "--preset", "paper_like", "--traces", 250, "--out", again, "--seed", 1)
    assert again.read_bytes() == calibrated_run.read_bytes()


def test_simulate_csv_outputs(tmp_path):
    code, _, _ = run(
        "simulate", "--preset", "noiseless", "--traces", 3, "--out", tmp_path / "a.lsc",
        "--out-csv", tmp_path / "a.csv", "--out-sidecar", tmp_path / "s.csv",
    )
    assert code == 0
    assert load(tmp_path / "a.csv", tmp_path / "s.csv").matrix.tolist() == load(tmp_path / "a.lsc").matrix.tolist()


def test_zero_traces_exit_2(tmp_path):
    code, _, err = run("simulate", "--preset", "noiseless", "--traces", 0, "--out", tmp_path / "x.lsc")
    assert code == 2 and "--traces" in err
    assert not (tmp_path / "x.lsc").exists()


@pytest.mark.parametrize(
    "argv",
    [
        ["classify", "--classifier", "lda"],
        ["simulate", "--preset", "loud"],
        ["corr", "--threshold", "abc"],
        ["frobnicate"],
    ],
)
def test_bad_flags_exit_2(argv, calibrated_run):
    assert run(*argv, "--input", calibrated_run)[0] == 2


def test_missing_paths_exit_2(tmp_path):
    assert run("corr", "--input", tmp_path / "nope.lsc")[0] == 2
    assert run("simulate", "--preset", "noiseless", "--out", tmp_path / "no" / "x.lsc")[0] == 2


def test_missing_sidecar_exit_2(tmp_path):
    ts = TraceSet.from_matrix(np.ones((4, 3)), range(4))
    buf = io.StringIO()
    write_csv(ts, buf)
    (tmp_path / "t.csv").write_text(buf.getvalue())
    code, _, err = run("corr", "--input", tmp_path / "t.csv")
    assert code == 2 and "sidecar" in err


def test_corrupt_container_exit_3(tmp_path, calibrated_run):
    bad = tmp_path / "bad.lsc"
    bad.write_bytes(calibrated_run.read_bytes()[:5000])
    code, _, err = run("classify", "--input", bad)
    assert code == 3 and "offset" in err


def test_corr_noiseless(tmp_path):
    lsc = tmp_path / "n.lsc"
    run("simulate", "--preset", "noiseless", "--traces", 250, "--out", lsc)
    code, out, _ = run("corr", "--input", lsc, "--out-csv", tmp_path / "rho.csv")
    assert code == 0
    assert out.startswith("LEAKAGE: yes (peak=1.000000")
    rows = (tmp_path / "rho.csv").read_text().splitlines()
    assert rows[0] == "sample_index,rho" and len(rows) == 1501
    assert float(rows[751].split(",")[1]) == pytest.approx(1.0, abs=1e-9)


def test_corr_pure_noise_golden(tmp_path):
    lsc = tmp_path / "p.lsc"
    run("simulate", "--preset", "pure_noise", "--traces", 250, "--out", lsc, "--seed", 0)
    code, out, _ = run("corr", "--input", lsc)
    assert code == 0
    assert out.strip() == "LEAKAGE: yes (peak=0.228305 at 1411, threshold=0.1)"


def test_svg_structure(tmp_path, calibrated_run):
    svg = tmp_path / "rho.svg"
    assert run("corr", "--input", calibrated_run, "--out-svg", svg, "--seed", 5)[0] == 0
    root = ET.parse(svg).getroot()
    panels = [g for g in root.iter(f"{SVG}g") if g.get("class") == "panel"]
    assert len(panels) == 2
    thresholds = [e for e in root.iter(f"{SVG}line") if e.get("class") == "threshold"]
    assert len(thresholds) == 1
    notes = [t.text for t in root.iter(f"{SVG}text") if t.get("class") == "annotation"]
    assert notes == ["threshold=0.1"]
    meta = json.loads(root.find(f"{SVG}metadata").text)
    assert meta["seed"] == "5" and meta["source_seed"] == "1"


def test_json_outputs_validate(tmp_path, calibrated_run):
    corr, metrics, report = tmp_path / "c.json", tmp_path / "m.json", tmp_path / "r.json"
    assert run("corr", "--input", calibrated_run, "--out-json", corr)[0] == 0
    assert run("classify", "--input", calibrated_run, "--classifier", "all", "--trees", 5, "--out-json", metrics)[0] == 0
    assert run("report", "--input", calibrated_run, "--trees", 5, "--out-json", report, "--out-table", tmp_path / "t.txt")[0] == 0
    for path, schema in ((corr, "corr"), (metrics, "metrics"), (report, "report")):
        doc = json.loads(path.read_text())
        jsonschema.validate(doc, load_schema(f"{schema}.schema.json"))
        assert doc["seed"] == 0
    assert (tmp_path / "t.txt").read_text().startswith("LEAKAGE: yes")


def test_classify_bit_pair_table(calibrated_run):
    code, out, _ = run("classify", "--input", calibrated_run, "--label", "bit_pair", "--classifier", "knn")
    assert code == 0
    assert "Recall" in out and "confusion (kNN" in out


def test_classify_paper_like_golden(calibrated_run):
    code, out, _ = run("classify", "--input", calibrated_run, "--classifier", "all", "--seed", 1)
    assert code == 0
    rows = {line[:14].strip(): line.split()[-1] for line in out.splitlines()[3:6]}
    assert rows == {"kNN": "0.52", "Linear SVM": "0.54", "Random Forest": "0.62"}


def test_noiseless_knn_row(tmp_path):
    model = tmp_path / "model.json"
    model.write_text(per_bit_model(samples=1500).to_json())
    lsc = tmp_path / "bits.lsc"
    assert run("simulate", "--model", model, "--traces", 250, "--out", lsc)[0] == 0
    code, out, _ = run("classify", "--input", lsc, "--classifier", "knn")
    assert code == 0
    knn = next(line for line in out.splitlines() if line.startswith("kNN"))
    assert knn.split()[-1] == "1.00"


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"preset": "noiseless", "traces": 7, "out": str(tmp_path / "c.lsc")}))
    assert run("simulate", "--config", cfg)[0] == 0
    assert len(load(tmp_path / "c.lsc")) == 7
    assert run("simulate", "--config", cfg, "--traces", 3)[0] == 0
    assert len(load(tmp_path / "c.lsc")) == 3
    cfg.write_text(json.dumps({"volume": 11}))
    code, _, err = run("simulate", "--config", cfg)
    assert code == 2 and "volume" in err


def test_ingest_mock_frames(tmp_path):
    model = preset("paper_like", seed=2)
    cal = AdcCalibration()
    cap = mock_device(model, 20, cal)
    (tmp_path / "f.bin").write_bytes(cap.stream)
    side = io.StringIO()
    write_sidecar_csv(cap.sidecar, side)
    (tmp_path / "s.csv").write_text(side.getvalue())
    out = tmp_path / "f.lsc"
    assert run("ingest", "--frames", tmp_path / "f.bin", "--sidecar", tmp_path / "s.csv", "--out", out)[0] == 0
    ts = load(out)
    frames, _ = quantize_campaign(simulate_campaign(20, model), cal)
    assert np.array_equal(ts.matrix, np.array([cal.to_volts(f.adc_samples) for f in frames]))
    assert ts.label_sidecar == cap.sidecar
    assert ts.traces[0].meta["source"] == "adc_frames"


def test_ingest_corrupted_frame_names_trace(tmp_path):
    cap = mock_device(preset("paper_like"), 5)
    frames = list(iter_frames(cap.stream))
    raw = bytearray(cap.stream)
    pos = 2 * len(frames[0]) + 40
    raw[pos] ^= 0xFF
    (tmp_path / "f.bin").write_bytes(bytes(raw))
    code, _, err = run("ingest", "--frames", tmp_path / "f.bin", "--out", tmp_path / "o.lsc")
    assert code == 3 and "trace 2" in err


def test_ingest_csv_round_trip(tmp_path):
    ts = simulate_campaign(6, preset("paper_like", seed=8))
    samples, side = io.StringIO(), io.StringIO()
    write_csv(ts, samples)
    write_sidecar_csv(ts.label_sidecar, side)
    (tmp_path / "t.csv").write_text(samples.getvalue())
    (tmp_path / "s.csv").write_text(side.getvalue())
    out = tmp_path / "t.lsc"
    assert run("ingest", "--csv", tmp_path / "t.csv", "--sidecar", tmp_path / "s.csv", "--out", out)[0] == 0
    back = load(out)
    assert np.array_equal(back.matrix, ts.matrix) and back.label_sidecar == ts.label_sidecar


def test_ingest_adc_counts_csv(tmp_path):
    (tmp_path / "c.csv").write_text("trace_id,s0,s1\n0,0,4095\n")
    out = tmp_path / "c.lsc"
    assert run("ingest", "--csv", tmp_path / "c.csv", "--adc-counts", "--out", out)[0] == 0
    assert load(out).traces[0].meta["source"] == "adc_csv"
