"""Minimal SVG line charts for the command-line artifacts.

The charts are written by hand so that the package needs no plotting
dependency; CSV files remain the canonical numerical output.
"""

from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 640, 400
MARGIN = dict(left=70, right=20, top=40, bottom=50)
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")


def _ticks(lo, hi, count=5):
    if hi <= lo:
        return [lo]
    return list(np.linspace(lo, hi, count))


def _fmt(v):
    return f"{v:.3g}"


def line_chart(path, series, title="", xlabel="", ylabel="", logy=False, logx=False):
    """Write a line chart of one or more ``(x, y, label)`` series to ``path``.

    With ``logy`` (``logx``) the vertical (horizontal) axis is logarithmic
    and non-positive values are dropped.
    """
    prepared = []
    for x, y, label in series:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        ok = np.isfinite(x) & np.isfinite(y)
        if logy:
            ok &= y > 0
        if logx:
            ok &= x > 0
        x, y = x[ok], y[ok]
        if logx:
            x = np.log10(x)
        if logy:
            y = np.log10(y)
        prepared.append((x, y, label))
    xs = np.concatenate([p[0] for p in prepared]) if prepared else np.zeros(0)
    ys = np.concatenate([p[1] for p in prepared]) if prepared else np.zeros(0)
    x_lo, x_hi = (float(xs.min()), float(xs.max())) if xs.size else (0.0, 1.0)
    y_lo, y_hi = (float(ys.min()), float(ys.max())) if ys.size else (0.0, 1.0)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_lo, y_hi = y_lo - 0.5, y_hi + 0.5
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def sx(v):
        return MARGIN["left"] + (v - x_lo) / (x_hi - x_lo) * pw

    def sy(v):
        return MARGIN["top"] + ph - (v - y_lo) / (y_hi - y_lo) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'font-family="sans-serif" font-size="12">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.1f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<rect x="{MARGIN["left"]}" y="{MARGIN["top"]}" width="{pw}" height="{ph}" '
        f'fill="none" stroke="black"/>',
    ]
    for v in _ticks(x_lo, x_hi):
        label = _fmt(10**v) if logx else _fmt(v)
        out.append(f'<text x="{sx(v):.1f}" y="{MARGIN["top"] + ph + 16}" text-anchor="middle">{label}</text>')
    for v in _ticks(y_lo, y_hi):
        label = _fmt(10**v) if logy else _fmt(v)
        out.append(f'<text x="{MARGIN["left"] - 6}" y="{sy(v) + 4:.1f}" text-anchor="end">{label}</text>')
        out.append(f'<line x1="{MARGIN["left"]}" x2="{MARGIN["left"] + pw}" y1="{sy(v):.1f}" '
                   f'y2="{sy(v):.1f}" stroke="#dddddd"/>')
    out.append(f'<text x="{MARGIN["left"] + pw / 2:.1f}" y="{HEIGHT - 10}" text-anchor="middle">'
               f'{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{MARGIN["top"] + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {MARGIN["top"] + ph / 2:.1f})">{escape(ylabel)}</text>')
    for i, (x, y, label) in enumerate(prepared):
        color = COLORS[i % len(COLORS)]
        if x.size:
            step = max(1, x.size // 4000)
            pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(x[::step], y[::step]))
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{pts}"/>')
        if label:
            ly = MARGIN["top"] + 14 + 16 * i
            out.append(f'<text x="{MARGIN["left"] + pw - 8}" y="{ly}" text-anchor="end" '
                       f'fill="{color}">{escape(label)}</text>')
    out.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(out) + "\n")
