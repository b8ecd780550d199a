"""Minimal SVG line plots with a log-scale y axis."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def line_plot_svg(series: dict, title: str = "", ylabel: str = "", width: int = 640,
                  height: int = 400) -> str:
    """Render ``{label: (ts, values)}`` as an SVG document.

    Nonpositive or non-finite values are dropped since the y axis is
    logarithmic.
    """
    pad_l, pad_r, pad_t, pad_b = 70, 150, 30, 40
    pts = {}
    for label, (ts, vals) in series.items():
        keep = [(float(t), math.log10(v)) for t, v in zip(ts, vals)
                if v is not None and math.isfinite(v) and v > 0]
        if keep:
            pts[label] = keep
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             '<rect width="100%" height="100%" fill="white"/>']
    if title:
        parts.append(f'<text x="{width / 2}" y="18" text-anchor="middle" '
                     f'font-size="14">{escape(title)}</text>')
    if not pts:
        parts.append("</svg>")
        return "\n".join(parts)

    all_t = [p[0] for v in pts.values() for p in v]
    all_y = [p[1] for v in pts.values() for p in v]
    t0, t1 = min(all_t), max(all_t)
    y0, y1 = math.floor(min(all_y)), math.ceil(max(all_y))
    if t1 == t0:
        t1 = t0 + 1
    if y1 == y0:
        y1 = y0 + 1
    pw, ph = width - pad_l - pad_r, height - pad_t - pad_b

    def sx(t):
        return pad_l + (t - t0) / (t1 - t0) * pw

    def sy(y):
        return pad_t + (y1 - y) / (y1 - y0) * ph

    parts.append(f'<rect x="{pad_l}" y="{pad_t}" width="{pw}" height="{ph}" '
                 'fill="none" stroke="black"/>')
    for e in range(y0, y1 + 1):
        y = sy(e)
        parts.append(f'<line x1="{pad_l}" y1="{y:.1f}" x2="{pad_l + pw}" y2="{y:.1f}" '
                     'stroke="#ddd"/>')
        parts.append(f'<text x="{pad_l - 5}" y="{y + 4:.1f}" text-anchor="end" '
                     f'font-size="11">1e{e}</text>')
    for t in (t0, (t0 + t1) / 2, t1):
        parts.append(f'<text x="{sx(t):.1f}" y="{pad_t + ph + 15}" text-anchor="middle" '
                     f'font-size="11">{t:g}</text>')
    parts.append(f'<text x="{pad_l + pw / 2}" y="{height - 5}" text-anchor="middle" '
                 'font-size="12">iteration</text>')
    if ylabel:
        parts.append(f'<text x="15" y="{pad_t + ph / 2}" font-size="12" '
                     f'transform="rotate(-90 15 {pad_t + ph / 2})" '
                     f'text-anchor="middle">{escape(ylabel)}</text>')
    for i, (label, p) in enumerate(pts.items()):
        color = COLORS[i % len(COLORS)]
        coords = " ".join(f"{sx(t):.1f},{sy(y):.1f}" for t, y in p)
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" '
                     f'points="{coords}"/>')
        ly = pad_t + 15 + 18 * i
        parts.append(f'<line x1="{pad_l + pw + 10}" y1="{ly}" x2="{pad_l + pw + 30}" '
                     f'y2="{ly}" stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{pad_l + pw + 35}" y="{ly + 4}" font-size="11">'
                     f'{escape(str(label))}</text>')
    parts.append("</svg>")
    return "\n".join(parts)
