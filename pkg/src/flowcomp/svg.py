"""Minimal line-plot SVG writer (polylines plus axes, no dependencies)."""
from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd")


def _ticks(lo: float, hi: float, n: int = 5) -> list:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10.0 ** np.floor(np.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = np.ceil(lo / step) * step
    return [float(v) for v in np.arange(start, hi + step * 1e-9, step)]


def line_plot(series, title: str = "", xlabel: str = "time [s]", ylabel: str = "",
              width: int = 720, height: int = 360, max_points: int = 4000) -> str:
    """Render ``series`` (a list of ``(label, x, y)``) as an SVG document string.

    Long series are decimated by striding to at most ``max_points`` vertices.
    """
    left, right, top, bottom = 60, 130, 30, 45
    pw, ph = width - left - right, height - top - bottom
    xs = [np.asarray(x, float) for _, x, _ in series]
    ys = [np.asarray(y, float) for _, _, y in series]
    xlo = min((x.min() for x in xs if x.size), default=0.0)
    xhi = max((x.max() for x in xs if x.size), default=1.0)
    ylo = min((y.min() for y in ys if y.size), default=0.0)
    yhi = max((y.max() for y in ys if y.size), default=1.0)
    if yhi == ylo:
        ylo, yhi = ylo - 1.0, yhi + 1.0
    if xhi == xlo:
        xhi = xlo + 1.0
    pad = 0.05 * (yhi - ylo)
    ylo, yhi = ylo - pad, yhi + pad

    def sx(v):
        return left + (v - xlo) / (xhi - xlo) * pw

    def sy(v):
        return top + (yhi - v) / (yhi - ylo) * ph

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>',
        f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#000000"/>',
    ]
    for t in _ticks(xlo, xhi):
        x = sx(t)
        out.append(f'<line x1="{x:.2f}" y1="{top + ph}" x2="{x:.2f}" y2="{top + ph + 4}" stroke="#000000"/>')
        out.append(f'<text x="{x:.2f}" y="{top + ph + 16}" text-anchor="middle">{t:g}</text>')
    for t in _ticks(ylo, yhi):
        y = sy(t)
        out.append(f'<line x1="{left - 4}" y1="{y:.2f}" x2="{left}" y2="{y:.2f}" stroke="#000000"/>')
        out.append(f'<line x1="{left}" y1="{y:.2f}" x2="{left + pw}" y2="{y:.2f}" stroke="#e0e0e0"/>')
        out.append(f'<text x="{left - 6}" y="{y + 4:.2f}" text-anchor="end">{t:g}</text>')
    if ylo < 0 < yhi:
        out.append(f'<line x1="{left}" y1="{sy(0):.2f}" x2="{left + pw}" y2="{sy(0):.2f}" stroke="#888888"/>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{height - 8}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="14" y="{top + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 14 {top + ph / 2:.1f})">{escape(ylabel)}</text>')
    for i, ((label, _, _), x, y) in enumerate(zip(series, xs, ys)):
        color = PALETTE[i % len(PALETTE)]
        stride = max(1, int(np.ceil(x.size / max_points)))
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(x[::stride], y[::stride]))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{pts}"/>')
        ly = top + 12 + 16 * i
        out.append(f'<line x1="{left + pw + 10}" y1="{ly - 4}" x2="{left + pw + 28}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw + 32}" y="{ly}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def save_line_plot(path, series, **kwargs) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(line_plot(series, **kwargs))
