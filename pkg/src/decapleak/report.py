"""Plain-text tables and SVG plots for analysis results."""

from __future__ import annotations

import json
from importlib import resources
from typing import Mapping, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .classify import DISPLAY_NAMES, Metrics

WIDTH = 900
PANEL_H = 260
MARGIN = 50


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _scale(values: np.ndarray, lo: float, hi: float, top: float, height: float) -> np.ndarray:
    span = hi - lo if hi > lo else 1.0
    return top + height - (values - lo) / span * height


def _polylines(xs: np.ndarray, ys: np.ndarray, css: str) -> list[str]:
    """One polyline per run of finite points."""
    out, run = [], []
    for x, y in zip(xs, ys):
        if np.isfinite(y):
            run.append(f"{x:.2f},{y:.2f}")
        elif run:
            out.append(run)
            run = []
    if run:
        out.append(run)
    return [f'<polyline class="{css}" fill="none" points="{" ".join(r)}"/>' for r in out]


def correlation_svg(
    mean_trace: np.ndarray,
    rho: np.ndarray,
    threshold: float,
    title: str = "",
    meta: Mapping[str, str] | None = None,
) -> str:
    """Two stacked panels: mean trace on top, |rho| with the threshold line below."""
    mean_trace = np.asarray(mean_trace, dtype=np.float64)
    mag = np.abs(np.asarray(rho, dtype=np.float64))
    n = mean_trace.size
    plot_w = WIDTH - 2 * MARGIN
    xs = MARGIN + np.arange(n) * (plot_w / max(n - 1, 1))
    total_h = 2 * PANEL_H + 3 * MARGIN

    top1 = MARGIN
    lo, hi = float(mean_trace.min()), float(mean_trace.max())
    y1 = _scale(mean_trace, lo, hi, top1, PANEL_H)

    top2 = 2 * MARGIN + PANEL_H
    y2 = _scale(mag, 0.0, 1.0, top2, PANEL_H)
    thr_y = float(_scale(np.array([threshold]), 0.0, 1.0, top2, PANEL_H)[0])

    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{total_h}" '
        f'viewBox="0 0 {WIDTH} {total_h}">',
    ]
    if meta:
        body = escape(json.dumps(dict(meta), sort_keys=True))
        lines.append(f"<metadata>{body}</metadata>")
    lines.append(
        "<style>.trace{stroke:#1f77b4;stroke-width:1}.rho{stroke:#d62728;stroke-width:1}"
        ".threshold{stroke:#000;stroke-dasharray:4 3}.frame{fill:none;stroke:#888}"
        "text{font-family:sans-serif;font-size:12px}</style>"
    )
    if title:
        lines.append(f'<text x="{MARGIN}" y="20">{escape(title)}</text>')

    lines.append('<g class="panel" id="trace-panel">')
    lines.append(f'<rect class="frame" x="{MARGIN}" y="{top1}" width="{plot_w}" height="{PANEL_H}"/>')
    lines.append(f'<text x="{MARGIN}" y="{top1 - 6}">mean trace (V), range {lo:.4f} .. {hi:.4f}</text>')
    lines.extend(_polylines(xs, y1, "trace"))
    lines.append("</g>")

    lines.append('<g class="panel" id="rho-panel">')
    lines.append(f'<rect class="frame" x="{MARGIN}" y="{top2}" width="{plot_w}" height="{PANEL_H}"/>')
    lines.append(f'<text x="{MARGIN}" y="{top2 - 6}">|rho| per sample index (0 .. 1)</text>')
    lines.extend(_polylines(xs, y2, "rho"))
    lines.append(
        f'<line class="threshold" x1="{MARGIN}" y1="{thr_y:.2f}" x2="{MARGIN + plot_w}" y2="{thr_y:.2f}"/>'
    )
    lines.append(
        f'<text class="annotation" x="{MARGIN + plot_w - 110}" y="{thr_y - 4:.2f}">threshold={threshold:g}</text>'
    )
    lines.append("</g>")
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def metrics_table(rows: Sequence[tuple[str, Metrics]]) -> str:
    """Text table of per-classifier scores.

    Binary tasks show per-class F1 and accuracy; wider tasks show macro
    recall, macro F1 and accuracy, followed by each confusion matrix.
    """
    binary = [(n, m) for n, m in rows if len(m.classes) == 2]
    multi = [(n, m) for n, m in rows if len(m.classes) != 2]
    out = []
    name_w = max([len(n) for n, _ in rows] + [10])
    if binary:
        hdr = f"{'Classifier':<{name_w}}  {'Class bit 0 F1':>14}  {'Class bit 1 F1':>14}  {'Accuracy':>8}"
        out += [hdr, "-" * len(hdr)]
        for name, m in binary:
            out.append(
                f"{name:<{name_w}}  {_fmt(m.f1[0]):>14}  {_fmt(m.f1[1]):>14}  {_fmt(m.accuracy):>8}"
            )
    if multi:
        if out:
            out.append("")
        hdr = f"{'Classifier':<{name_w}}  {'Recall':>8}  {'F1':>8}  {'Accuracy':>8}"
        out += [hdr, "-" * len(hdr)]
        for name, m in multi:
            out.append(
                f"{name:<{name_w}}  {_fmt(m.macro_recall):>8}  {_fmt(m.macro_f1):>8}  {_fmt(m.accuracy):>8}"
            )
        for name, m in multi:
            out += ["", f"confusion ({name}; rows = truth, columns = prediction)"]
            out.append("      " + " ".join(f"{c:>5}" for c in m.classes))
            for c, row in zip(m.classes, m.confusion):
                out.append(f"{c:>5} " + " ".join(f"{v:>5d}" for v in row))
    return "\n".join(out) + "\n"


def classifier_label(name: str, target: str = "") -> str:
    base = DISPLAY_NAMES.get(name, name)
    return f"{base}({target})" if target else base


def load_schema(name: str) -> dict:
    text = resources.files("decapleak").joinpath("schemas", name).read_text()
    return json.loads(text)


def dumps(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
