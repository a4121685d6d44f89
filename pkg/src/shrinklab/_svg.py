"""Minimal deterministic SVG line plots (no timestamps, fixed float format)."""
from __future__ import annotations

import math
from html import escape

import numpy as np

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf")


def _ticks(lo, hi, k=5):
    if hi <= lo:
        hi = lo + 1.0
    return [lo + (hi - lo) * i / (k - 1) for i in range(k)]


def line_plot(path, series, title="", xlabel="", ylabel="", logy=False, comment=None,
              width=640, height=400):
    """Write an SVG with one polyline per ``(x, y, label)`` in ``series``."""
    left, right, top, bottom = 70, 20, 40, 50
    xs = np.concatenate([np.asarray(s[0], float) for s in series])
    ys = np.concatenate([np.asarray(s[1], float) for s in series])
    if logy:
        ys = np.log10(np.clip(ys, 1e-300, None))
    x0, x1 = float(np.min(xs)), float(np.max(xs))
    y0, y1 = float(np.min(ys)), float(np.max(ys))
    if x1 <= x0:
        x1 = x0 + 1.0
    if y1 - y0 <= 1e-12 * max(1.0, abs(y0)):
        pad = max(abs(y0) * 1e-3, 1e-12)
        y0, y1 = y0 - pad, y1 + pad
    pw, ph = width - left - right, height - top - bottom

    def px(x):
        return left + (x - x0) / (x1 - x0) * pw

    def py(y):
        return top + ph - (y - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'font-family="sans-serif" font-size="11">']
    if comment:
        out.append(f"<!-- {escape(comment).replace('--', '- -')} -->")
    out.append(f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>')
    for t in _ticks(x0, x1):
        out.append(f'<text x="{px(t):.2f}" y="{top + ph + 15}" text-anchor="middle">{t:.3g}</text>')
    for t in _ticks(y0, y1):
        lab = f"1e{t:.2g}" if logy else f"{t:.4g}"
        out.append(f'<text x="{left - 5}" y="{py(t) + 4:.2f}" text-anchor="end">{lab}</text>')
    out.append(f'<text x="{width / 2}" y="20" text-anchor="middle" font-size="13">{escape(title)}</text>')
    out.append(f'<text x="{left + pw / 2}" y="{height - 10}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="15" y="{top + ph / 2}" text-anchor="middle" '
               f'transform="rotate(-90 15 {top + ph / 2})">{escape(ylabel)}</text>')
    for i, (x, y, label) in enumerate(series):
        y = np.asarray(y, float)
        if logy:
            y = np.log10(np.clip(y, 1e-300, None))
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(np.asarray(x, float), y)
                       if math.isfinite(b))
        c = _COLORS[i % len(_COLORS)]
        out.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{pts}"/>')
        out.append(f'<text x="{left + 10}" y="{top + 15 + 14 * i}" fill="{c}">{escape(label)}</text>')
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")
