"""CSV, JSON and SVG outputs for runs, sweeps and comparisons.

All files of one emit call are rendered in memory first; each is then
written to a temporary file and renamed into place.
"""

from __future__ import annotations

import json
import os
from xml.sax.saxutils import escape

import numpy as np

from ..data_io import atomic_write_bytes
from .metrics import MetricsReport, smooth_curve

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"]


def fmt(x) -> str:
    return format(float(x), ".9g")


def _json_bytes(obj) -> bytes:
    return (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode()


def _nice_ticks(lo, hi, count=5):
    if hi <= lo:
        hi = lo + 1.0
    return [lo + (hi - lo) * i / (count - 1) for i in range(count)]


def line_chart(series: dict, title: str, xlabel: str, ylabel: str, width=720, height=440, y_range=None) -> str:
    """Self-contained SVG with axes, ticks, a legend and one polyline per series.

    ``series`` maps a legend label to ``(xs, ys)``.
    """
    left, right, top, bottom = 70, 170, 40, 60
    pw, ph = width - left - right, height - top - bottom
    xs_all = np.concatenate([np.asarray(xs, float) for xs, _ in series.values()])
    ys_all = np.concatenate([np.asarray(ys, float) for _, ys in series.values()])
    x_lo, x_hi = float(xs_all.min()), float(xs_all.max())
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    y_lo, y_hi = y_range if y_range is not None else (float(ys_all.min()), float(ys_all.max()))
    if y_hi == y_lo:
        y_lo, y_hi = y_lo - 0.5, y_hi + 0.5

    def px(x):
        return left + (x - x_lo) / (x_hi - x_lo) * pw

    def py(y):
        return top + ph - (y - y_lo) / (y_hi - y_lo) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{left + pw / 2:.1f}" y="24" font-family="sans-serif" font-size="15" text-anchor="middle">{escape(title)}</text>',
        f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>',
    ]
    for xv in _nice_ticks(x_lo, x_hi):
        x = px(xv)
        out.append(f'<line x1="{x:.2f}" y1="{top + ph}" x2="{x:.2f}" y2="{top + ph + 5}" stroke="black"/>')
        out.append(
            f'<text x="{x:.2f}" y="{top + ph + 18}" font-family="sans-serif" font-size="11" text-anchor="middle">{xv:.4g}</text>'
        )
    for yv in _nice_ticks(y_lo, y_hi):
        y = py(yv)
        out.append(f'<line x1="{left}" y1="{y:.2f}" x2="{left + pw}" y2="{y:.2f}" stroke="#e0e0e0"/>')
        out.append(
            f'<text x="{left - 6}" y="{y + 4:.2f}" font-family="sans-serif" font-size="11" text-anchor="end">{yv:.3g}</text>'
        )
    out.append(
        f'<text x="{left + pw / 2:.1f}" y="{height - 15}" font-family="sans-serif" font-size="13" text-anchor="middle">{escape(xlabel)}</text>'
    )
    out.append(
        f'<text x="18" y="{top + ph / 2:.1f}" font-family="sans-serif" font-size="13" text-anchor="middle" '
        f'transform="rotate(-90 18 {top + ph / 2:.1f})">{escape(ylabel)}</text>'
    )
    for i, (label, (xs, ys)) in enumerate(series.items()):
        color = PALETTE[i % len(PALETTE)]
        points = " ".join(f"{px(float(x)):.2f},{py(float(y)):.2f}" for x, y in zip(xs, ys))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{points}"/>')
        ly = top + 10 + 20 * i
        out.append(f'<line x1="{left + pw + 15}" y1="{ly}" x2="{left + pw + 40}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(
            f'<text x="{left + pw + 45}" y="{ly + 4}" font-family="sans-serif" font-size="12">{escape(str(label))}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _write_all(out_dir, files: dict[str, bytes]) -> list[str]:
    os.makedirs(out_dir, exist_ok=True)
    if not os.access(out_dir, os.W_OK):
        raise PermissionError(f"output directory {out_dir} is not writable")
    paths = []
    for name, blob in files.items():
        path = os.path.join(out_dir, name)
        atomic_write_bytes(path, blob)
        paths.append(path)
    return paths


def metrics_csv(report: MetricsReport) -> bytes:
    lines = ["epoch,train_loss,test_accuracy"]
    lines += [f"{r.epoch},{fmt(r.train_loss)},{fmt(r.test_accuracy)}" for r in report.per_epoch]
    return ("\n".join(lines) + "\n").encode()


def summary(report: MetricsReport, cfg: dict | None = None) -> dict:
    out = {
        "config_hash": report.config_hash,
        "epochs": len(report.per_epoch),
        "max_test_accuracy": report.max_test_accuracy,
        "max_test_epoch": report.max_test_epoch,
        "median_test_accuracy_window": report.median_test_accuracy_window,
        "mask": {
            "mode": report.info.get("classifier_mode"),
            "threshold_t": report.info.get("threshold_t"),
            "frozen_fraction": report.info.get("frozen_fraction"),
            "frozen_count": report.info.get("frozen_count"),
            "size": report.info.get("classifier_weights"),
        },
        "info": report.info,
        "runtime_seconds": report.runtime_seconds,
    }
    if cfg is not None:
        out["median_window"] = cfg["metrics"]["median_window"]
        out["smooth_width"] = cfg["metrics"]["smooth_width"]
    return out


def emit_report(report: MetricsReport, out_dir, cfg: dict | None = None, title="Test accuracy") -> list[str]:
    """Write ``metrics.csv``, ``summary.json``, ``report.json`` and ``accuracy.svg``."""
    epochs = [r.epoch for r in report.per_epoch]
    series = {"test accuracy": (epochs, report.accuracies)}
    width = None if cfg is None else cfg["metrics"]["smooth_width"]
    if width is not None and len(epochs) >= width:
        series[f"smoothed (w={width})"] = (epochs[width - 1 :], smooth_curve(report.accuracies, width))
    files = {
        "metrics.csv": metrics_csv(report),
        "summary.json": _json_bytes(summary(report, cfg)),
        "report.json": _json_bytes(report.to_dict()),
        "accuracy.svg": line_chart(series, title, "epoch", "test accuracy", y_range=(0.0, 1.0)).encode(),
    }
    return _write_all(out_dir, files)


def sweep_table(rows) -> list[dict]:
    return [
        {
            "threshold_t": r.threshold_t,
            "status": r.status,
            "max_test_accuracy": r.max_test_accuracy,
            "max_test_epoch": r.max_test_epoch,
            "median_test_accuracy_window": r.median_test_accuracy_window,
            "frozen_fraction": r.frozen_fraction,
            "error": r.error,
        }
        for r in rows
    ]


def emit_sweep(rows, out_dir, cfg: dict | None = None) -> list[str]:
    """Write ``sweep.csv``, ``sweep.json``, ``sweep.svg`` and one run directory per threshold."""
    lines = ["threshold_t,status,max_test_accuracy,median_test_accuracy_window,frozen_fraction"]
    for r in rows:
        cells = [fmt(r.threshold_t), r.status]
        for v in (r.max_test_accuracy, r.median_test_accuracy_window, r.frozen_fraction):
            cells.append("" if v is None else fmt(v))
        lines.append(",".join(cells))
    ok = [r for r in rows if r.status == "ok"]
    series = {}
    if ok:
        series["max test accuracy"] = ([r.threshold_t for r in ok], [r.max_test_accuracy for r in ok])
        with_median = [r for r in ok if r.median_test_accuracy_window is not None]
        if with_median:
            series["median test accuracy"] = (
                [r.threshold_t for r in with_median],
                [r.median_test_accuracy_window for r in with_median],
            )
    files = {
        "sweep.csv": ("\n".join(lines) + "\n").encode(),
        "sweep.json": _json_bytes({"rows": sweep_table(rows)}),
    }
    if series:
        files["sweep.svg"] = line_chart(series, "Accuracy vs threshold t", "threshold t", "test accuracy", y_range=(0.0, 1.0)).encode()
    paths = _write_all(out_dir, files)
    for r in ok:
        paths += emit_report(r.report, os.path.join(out_dir, f"t={r.threshold_t:.2f}"), cfg, f"Test accuracy, t={r.threshold_t:g}")
    return paths


def emit_comparison(comp, out_dir, cfg: dict | None = None) -> list[str]:
    """Write ``compare.json`` and ``compare.svg`` (smoothed curves) plus both runs."""
    w = comp.smooth_width
    epochs = list(range(w, len(comp.baseline.per_epoch) + 1))
    series = {
        "baseline (dense)": (epochs, comp.baseline_smoothed),
        f"Weight-Freezing t={comp.threshold_t:g}": (epochs, comp.weight_freezing_smoothed),
    }
    body = {
        "threshold_t": comp.threshold_t,
        "smooth_width": w,
        "smoothing": "trailing",
        "baseline": {
            "max_test_accuracy": comp.baseline.max_test_accuracy,
            "median_test_accuracy_window": comp.baseline.median_test_accuracy_window,
        },
        "weight_freezing": {
            "max_test_accuracy": comp.weight_freezing.max_test_accuracy,
            "median_test_accuracy_window": comp.weight_freezing.median_test_accuracy_window,
        },
        "median_difference": comp.median_difference,
        "baseline_smoothed": [float(v) for v in comp.baseline_smoothed],
        "weight_freezing_smoothed": [float(v) for v in comp.weight_freezing_smoothed],
    }
    files = {
        "compare.json": _json_bytes(body),
        "compare.svg": line_chart(
            series, f"Smoothed test accuracy (window {w})", "epoch", "test accuracy", y_range=(0.0, 1.0)
        ).encode(),
    }
    paths = _write_all(out_dir, files)
    paths += emit_report(comp.baseline, os.path.join(out_dir, "baseline"), cfg, "Baseline")
    paths += emit_report(comp.weight_freezing, os.path.join(out_dir, "weight_freezing"), cfg, "Weight-Freezing")
    return paths
