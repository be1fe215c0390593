"""Command-line front end.

    decapleak simulate --preset paper_like --traces 250 --seed 1 --out run.lsc
    decapleak corr --input run.lsc --out-csv rho.csv --out-svg rho.svg
    decapleak classify --input run.lsc --classifier all --out-json metrics.json
    decapleak ingest --frames capture.bin --sidecar secrets.csv --out run.lsc
    decapleak report --input run.lsc --out-json report.json --out-svg rho.svg

Every subcommand accepts ``--config FILE`` (JSON object keyed by option
name, e.g. ``{"traces": 250}``); flags given on the command line win.

Exit codes: 0 success, 2 configuration or input error, 3 I/O or file
format error.
"""

from __future__ import annotations

import argparse
import io
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .acquisition import AdcCalibration, csv_counts_to_traceset, frames_to_traceset, iter_frames
from .classify import CLASSIFIERS, Hyperparams, build_dataset, evaluate, fit, predict, split
from .errors import ConfigError, DecapLeakError, FormatError, InputError, TraceIOError
from .report import classifier_label, correlation_svg, dumps, metrics_table
from .sim import PRESETS, LeakageModel, preset, simulate_campaign
from .stats import DEFAULT_THRESHOLD, correlation_series, leakage_verdict
from .traces import LabelSpec, load, read_sidecar_csv, save, trace_set_read, write_csv, write_sidecar_csv

EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _add_common(p: argparse.ArgumentParser, seed_default: int | None = 0) -> None:
    p.add_argument("--config", type=Path, help="JSON file with option defaults")
    p.add_argument("--seed", type=int, default=seed_default, help="seed for all randomness")


def _add_input(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", type=Path, help="LSC1 container or sample CSV")
    p.add_argument("--sidecar", type=Path, help="secret CSV (trace_id,secret_hex) for CSV input")


def _add_label(p: argparse.ArgumentParser, kind: str) -> None:
    p.add_argument("--label", dest="label_kind", default=kind, choices=["single_bit", "bit_pair", "hamming_weight"])
    p.add_argument("--byte-index", type=int, default=0, help="secret byte counted from the end (0 = last)")
    p.add_argument("--bit-index", type=int, default=0)


def _add_corr(p: argparse.ArgumentParser) -> None:
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    p.add_argument("--out-csv", type=Path)
    p.add_argument("--out-svg", type=Path)


def _add_classify(p: argparse.ArgumentParser, default: str) -> None:
    p.add_argument("--classifier", default=default, choices=list(CLASSIFIERS) + ["all"])
    p.add_argument("--ratio", type=float, default=0.8, help="training fraction")
    p.add_argument("--stratify", action="store_true", default=False)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--lam", type=float, default=1e-3)
    p.add_argument("--trees", type=int, default=100)
    p.add_argument("--max-depth", type=int, default=None)
    p.add_argument("--jobs", type=int, default=1, help="worker threads (results do not depend on it)")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="decapleak", description="Side-channel leakage evaluation of KEM decapsulation traces.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="generate a synthetic campaign")
    _add_common(p, seed_default=None)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--preset", choices=PRESETS)
    src.add_argument("--model", type=Path, help="LeakageModel JSON")
    p.add_argument("--traces", type=int, default=250)
    p.add_argument("--out", type=Path)
    p.add_argument("--out-csv", type=Path, help="also write samples as CSV")
    p.add_argument("--out-sidecar", type=Path, help="also write secrets as CSV")
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("ingest", help="convert captured frames or CSV to a container")
    _add_common(p)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--frames", type=Path, help="binary stream of SCAP frames")
    src.add_argument("--csv", type=Path, help="sample CSV")
    p.add_argument("--sidecar", type=Path)
    p.add_argument("--adc-counts", action="store_true", default=False, help="CSV holds raw ADC counts")
    p.add_argument("--volts-per-count", type=float, default=3.3 / 4096)
    p.add_argument("--offset-volts", type=float, default=0.0)
    p.add_argument("--out", type=Path)

    p = sub.add_parser("corr", help="per-sample correlation and leakage verdict")
    _add_common(p)
    _add_input(p)
    _add_label(p, "hamming_weight")
    _add_corr(p)
    p.add_argument("--out-json", type=Path)

    p = sub.add_parser("classify", help="train and score bit-prediction classifiers")
    _add_common(p)
    _add_input(p)
    _add_label(p, "single_bit")
    _add_classify(p, "knn")
    p.add_argument("--out-json", type=Path)

    p = sub.add_parser("report", help="corr and classify in one document")
    _add_common(p)
    _add_input(p)
    _add_label(p, "single_bit")
    p.add_argument("--corr-label", default="hamming_weight", choices=["single_bit", "bit_pair", "hamming_weight"])
    _add_corr(p)
    _add_classify(p, "all")
    p.add_argument("--out-json", type=Path)
    p.add_argument("--out-table", type=Path)
    return ap


def parse_args(argv: list[str]) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config is None:
        return args
    try:
        doc = json.loads(args.config.read_text())
    except OSError as exc:
        raise TraceIOError(f"cannot read config {args.config}: {exc}", 0) from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {args.config} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config file must hold a JSON object")
    subparser = parser._subparsers._group_actions[0].choices[args.command]
    dests = {a.dest: a for a in subparser._actions}
    settings = {}
    for key, value in doc.items():
        dest = key.replace("-", "_")
        if dest in ("help", "config") or dest not in dests:
            raise ConfigError(f"unknown config key {key!r} for {args.command}")
        action = dests[dest]
        if action.type is Path and value is not None:
            value = Path(value)
        if action.choices is not None and value not in action.choices:
            raise ConfigError(f"config key {key!r}: {value!r} not in {list(action.choices)}")
        settings[dest] = value
    subparser.set_defaults(**settings)
    return parser.parse_args(argv)


def _require(value, flag: str):
    if value is None:
        raise ConfigError(f"{flag} is required")
    return value


def _check_output(path: Path | None) -> None:
    if path is not None and not path.resolve().parent.is_dir():
        raise ConfigError(f"output directory of {path} does not exist")


def _check_input(path: Path | None, flag: str) -> Path:
    path = _require(path, flag)
    if not path.is_file():
        raise ConfigError(f"{flag} {path} does not exist")
    return path


def _label_spec(args, kind: str | None = None) -> LabelSpec:
    k = kind or args.label_kind
    bit = args.bit_index
    if k == "bit_pair":
        bit = min(bit, 6)
    return LabelSpec(k, byte_index=args.byte_index, bit_index=bit)


def _label_doc(spec: LabelSpec) -> dict:
    return {"kind": spec.kind, "byte_index": spec.byte_index, "bit_index": spec.bit_index}


def _load_input(args):
    path = _check_input(args.input, "--input")
    sidecar = _check_input(args.sidecar, "--sidecar") if args.sidecar else None
    ts = load(path, sidecar)
    if not ts.has_sidecar:
        raise InputError(f"{path} carries no secret sidecar; labels are required")
    return ts


def _write_text(path: Path | None, text: str) -> None:
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)


def cmd_simulate(args) -> int:
    out = _require(args.out, "--out")
    for p in (out, args.out_csv, args.out_sidecar):
        _check_output(p)
    if args.traces < 1:
        raise ConfigError(f"--traces must be >= 1, got {args.traces}")
    if args.model is not None:
        model = LeakageModel.from_json(_check_input(args.model, "--model").read_text())
    else:
        model = preset(args.preset or "paper_like")
    if args.seed is not None:
        model = replace(model, seed=args.seed)
    ts = simulate_campaign(args.traces, model, jobs=max(1, args.jobs))
    n = save(ts, out)
    if args.out_csv:
        buf = io.StringIO()
        write_csv(ts, buf)
        _write_text(args.out_csv, buf.getvalue())
    if args.out_sidecar:
        buf = io.StringIO()
        write_sidecar_csv(ts.label_sidecar, buf)
        _write_text(args.out_sidecar, buf.getvalue())
    print(f"wrote {len(ts)} traces x {ts.samples_per_trace} samples ({n} bytes) to {out}; seed={model.seed}")
    return EXIT_OK


def cmd_ingest(args) -> int:
    out = _require(args.out, "--out")
    _check_output(out)
    cal = AdcCalibration(args.volts_per_count, args.offset_volts)
    sidecar = ()
    if args.sidecar:
        with open(_check_input(args.sidecar, "--sidecar"), newline="") as fh:
            sidecar = tuple(read_sidecar_csv(fh))
    meta = {"seed": str(args.seed)}
    if args.frames:
        data = _check_input(args.frames, "--frames").read_bytes()
        frames = list(iter_frames(data))
        if not frames:
            raise FormatError(f"{args.frames}: no frames found")
        ts = frames_to_traceset(frames, cal, sidecar, meta)
    elif args.csv:
        path = _check_input(args.csv, "--csv")
        if args.adc_counts:
            with open(path, newline="") as fh:
                ts = csv_counts_to_traceset(fh, cal, sidecar)
        else:
            with open(path, "rb") as fh:
                ts = trace_set_read(fh, sidecar)
        ts = type(ts)(ts.traces, ts.samples_per_trace, ts.label_sidecar, {**ts.meta, **meta})
    else:
        raise ConfigError("one of --frames or --csv is required")
    n = save(ts, out)
    print(f"ingested {len(ts)} traces x {ts.samples_per_trace} samples ({n} bytes) to {out}")
    return EXIT_OK


def _corr(args, ts, kind: str):
    spec = _label_spec(args, kind)
    labels = ts.labels(spec)
    series = correlation_series(ts, labels, spec.kind)
    report = leakage_verdict(series, args.threshold)
    if args.out_csv:
        buf = io.StringIO()
        series.to_csv(buf)
        _write_text(args.out_csv, buf.getvalue())
    if args.out_svg:
        meta = {"seed": str(args.seed), "source_seed": ts.meta.get("seed", ""), "label": spec.describe()}
        svg = correlation_svg(
            ts.matrix.mean(axis=0), series.rho, args.threshold, f"Correlation against {spec.describe()}", meta
        )
        _write_text(args.out_svg, svg)
    return spec, report


def cmd_corr(args) -> int:
    for p in (args.out_csv, args.out_svg, args.out_json):
        _check_output(p)
    ts = _load_input(args)
    spec, report = _corr(args, ts, None)
    print(report.line())
    if args.out_json:
        doc = {
            "command": "corr",
            "seed": args.seed,
            "source_seed": ts.meta.get("seed"),
            "input": str(args.input),
            "label": _label_doc(spec),
            "leakage": report.to_dict(),
        }
        _write_text(args.out_json, dumps(doc))
    return EXIT_OK


def _hyperparams(name: str, args) -> tuple[Hyperparams, dict]:
    hp = Hyperparams(args.k, args.epochs, args.lam, args.trees, args.max_depth, max(1, args.jobs))
    shown = {
        "knn": {"k": hp.k},
        "svm": {"epochs": hp.epochs, "lambda": hp.lam, "standardize": True},
        "rf": {"n_trees": hp.n_trees, "max_depth": hp.max_depth, "bootstrap": True, "max_features": "sqrt"},
    }[name]
    return hp, shown


def _classify(args, ts):
    spec = _label_spec(args)
    names = list(CLASSIFIERS) if args.classifier == "all" else [args.classifier]
    parts = split(build_dataset(ts, spec), args.ratio, args.seed, args.stratify)
    results, rows = [], []
    for name in names:
        hp, shown = _hyperparams(name, args)
        model = fit(name, parts.train, args.seed, hp)
        m = evaluate(predict(model, parts.test.features), parts.test.labels, parts.test.classes)
        results.append({"classifier": name, "hyperparams": shown, "metrics": m.to_dict()})
        rows.append((classifier_label(name), m))
    doc = {
        "label": _label_doc(spec),
        "split": {
            "ratio": args.ratio,
            "train": len(parts.train),
            "test": len(parts.test),
            "stratified": bool(args.stratify),
        },
        "results": results,
    }
    return doc, metrics_table(rows)


def cmd_classify(args) -> int:
    _check_output(args.out_json)
    ts = _load_input(args)
    doc, table = _classify(args, ts)
    print(f"target: {_label_spec(args).describe()}; seed={args.seed}; "
          f"train/test = {doc['split']['train']}/{doc['split']['test']}")
    print(table, end="")
    if args.out_json:
        _write_text(args.out_json, dumps({"command": "classify", "seed": args.seed, "input": str(args.input), **doc}))
    return EXIT_OK


def cmd_report(args) -> int:
    for p in (args.out_csv, args.out_svg, args.out_json, args.out_table):
        _check_output(p)
    ts = _load_input(args)
    spec, report = _corr(args, ts, args.corr_label)
    cls_doc, table = _classify(args, ts)
    print(report.line())
    print(table, end="")
    _write_text(args.out_table, report.line() + "\n\n" + table)
    if args.out_json:
        doc = {
            "command": "report",
            "seed": args.seed,
            "input": str(args.input),
            "corr": {"label": _label_doc(spec), "leakage": report.to_dict()},
            "classify": cls_doc,
        }
        _write_text(args.out_json, dumps(doc))
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "ingest": cmd_ingest,
    "corr": cmd_corr,
    "classify": cmd_classify,
    "report": cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
        return COMMANDS[args.command](args)
    except (ConfigError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FormatError, TraceIOError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except DecapLeakError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

