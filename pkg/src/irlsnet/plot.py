"""Static SVG line plots generated from a scenario's ``predictions.csv``.

Pure function of the CSV: no plotting library, so any external tool can
replace it by reading the same file.
"""
from __future__ import annotations

import csv
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

W, H, PAD = 720, 420, 50
_PALETTE = {"proposed": "#2a9d3f", "baseline": "#d1495b", "mc_dropout": "#7b5ea7", "oracle": "#1f6fb2"}


class PlotError(RuntimeError):
    pass


def read_predictions(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise PlotError(f"missing {path}")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise PlotError(f"{path} has no data rows")
    header = rows[0]
    data = np.array(rows[1:], dtype=np.float64)
    return {name: data[:, j] for j, name in enumerate(header)}


def _polyline(xs, ys, sx, sy, color, width=2.0, opacity=1.0) -> str:
    pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys))
    return (f'<polyline fill="none" stroke="{color}" stroke-width="{width}" '
            f'stroke-opacity="{opacity}" points="{pts}"/>')


def line_plot(x, series, title: str, xlabel: str, ylabel: str) -> str:
    """``series`` is a list of (label or None, y, color, width, opacity)."""
    x = np.asarray(x, dtype=np.float64)
    ys = np.concatenate([np.asarray(s[1], dtype=np.float64) for s in series])
    x0, x1 = float(x.min()), float(x.max())
    y0, y1 = float(ys.min()), float(ys.max())
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0

    def sx(v):
        return PAD + (v - x0) / (x1 - x0) * (W - 2 * PAD)

    def sy(v):
        return H - PAD - (v - y0) / (y1 - y0) * (H - 2 * PAD)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
           f'<rect width="{W}" height="{H}" fill="white"/>',
           f'<text x="{W / 2}" y="20" text-anchor="middle" font-family="sans-serif" font-size="14">{escape(title)}</text>',
           f'<line x1="{PAD}" y1="{H - PAD}" x2="{W - PAD}" y2="{H - PAD}" stroke="black"/>',
           f'<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{H - PAD}" stroke="black"/>',
           f'<text x="{W / 2}" y="{H - 12}" text-anchor="middle" font-family="sans-serif" font-size="12">{escape(xlabel)}</text>',
           f'<text x="14" y="{H / 2}" text-anchor="middle" font-family="sans-serif" font-size="12" '
           f'transform="rotate(-90 14 {H / 2})">{escape(ylabel)}</text>']
    for v in (x0, x1):
        out.append(f'<text x="{sx(v):.2f}" y="{H - PAD + 15}" text-anchor="middle" font-family="sans-serif" '
                   f'font-size="10">{v:.3g}</text>')
    for v in (y0, y1):
        out.append(f'<text x="{PAD - 4}" y="{sy(v):.2f}" text-anchor="end" font-family="sans-serif" '
                   f'font-size="10">{v:.3g}</text>')
    legend_y = PAD
    for label, y, color, width, opacity in series:
        out.append(_polyline(x, y, sx, sy, color, width, opacity))
        if label:
            out.append(f'<text x="{W - PAD - 150}" y="{legend_y}" font-family="sans-serif" font-size="11" '
                       f'fill="{color}">{escape(label)}</text>')
            legend_y += 14
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _models(cols) -> list:
    return [c[:-4] for c in cols if c.endswith("_avg") and not c.endswith("_sigma_avg")]


def emit_plot_data(out_dir) -> list:
    """Write SVG plots next to ``predictions.csv``; return the written paths.

    All SVG text is built before any file is written, so a failure leaves no
    partial plot behind.
    """
    out_dir = Path(out_dir)
    cols = read_predictions(out_dir / "predictions.csv")
    models = _models(cols)
    if not models:
        raise PlotError(f"{out_dir / 'predictions.csv'}: no '<model>_avg' columns")
    docs = {}
    if "x" in cols:
        x = cols["x"]
        series = []
        if "true_mean" in cols:
            series.append(("true mean", cols["true_mean"], "#555555", 2.5, 1.0))
        for m in models:
            color = _PALETTE.get(m, "#000000")
            for c in sorted(k for k in cols if k.startswith(f"{m}_rep")):
                series.append((None, cols[c], color, 1.0, 0.25))
            series.append((f"{m} (rep average)", cols[f"{m}_avg"], color, 2.5, 1.0))
        docs["fit.svg"] = line_plot(x, series, "Regression fit", "x", "y")
        sig = [(f"{m} predicted sigma", cols[f"{m}_sigma_avg"], _PALETTE.get(m, "#000000"), 2.5, 1.0)
               for m in models if f"{m}_sigma_avg" in cols]
        if sig:
            if "true_sigma" in cols:
                sig.insert(0, ("true sigma", cols["true_sigma"], "#555555", 2.5, 1.0))
            docs["sigma.svg"] = line_plot(x, sig, "Noise scale", "x", "sigma")
    else:
        order = np.argsort(cols["actual"], kind="stable")
        rank = np.arange(order.size, dtype=np.float64)
        keep = np.unique(np.linspace(0, order.size - 1, min(order.size, 2000)).astype(int))
        order, rank = order[keep], rank[keep]
        series = [("actual", cols["actual"][order], "#555555", 2.0, 1.0)]
        series += [(f"{m} (rep average)", cols[f"{m}_avg"][order], _PALETTE.get(m, "#000000"), 1.0, 0.6)
                   for m in models]
        docs["portfolio.svg"] = line_plot(rank, series, "Predictions sorted by actual value", "contract rank",
                                          "target")
    written = []
    for name, text in docs.items():
        path = out_dir / name
        path.write_text(text)
        written.append(path)
    return written
