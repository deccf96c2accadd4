"""Dependency-free SVG polyline charts for scan outputs."""
from __future__ import annotations

import numpy as np

COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")


def polyline_chart(xs, series: dict, width: int = 640, height: int = 400,
                   title: str = "") -> str:
    """Render named y-series over shared x values as an SVG line chart.

    Points are drawn as unconnected short segments when a series jumps by
    more than half its range between neighbors, so discontinuities stay
    visually discontinuous.
    """
    xs = np.asarray(xs, dtype=float)
    all_y = np.concatenate([np.asarray(v, dtype=float) for v in series.values()])
    x_lo, x_hi = float(xs.min()), float(xs.max())
    y_lo, y_hi = float(all_y.min()), float(all_y.max())
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    pad = 40

    def px(x):
        return pad + (x - x_lo) / (x_hi - x_lo) * (width - 2 * pad)

    def py(y):
        return height - pad - (y - y_lo) / (y_hi - y_lo) * (height - 2 * pad)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{pad}" y="{height - pad + 16}" font-size="10">{x_lo:.3g}</text>',
        f'<text x="{width - pad}" y="{height - pad + 16}" text-anchor="end" font-size="10">{x_hi:.3g}</text>',
        f'<text x="{pad - 4}" y="{height - pad}" text-anchor="end" font-size="10">{y_lo:.3g}</text>',
        f'<text x="{pad - 4}" y="{pad}" text-anchor="end" font-size="10">{y_hi:.3g}</text>',
    ]
    for ci, (name, ys) in enumerate(series.items()):
        ys = np.asarray(ys, dtype=float)
        color = COLORS[ci % len(COLORS)]
        jump = 0.5 * (y_hi - y_lo)
        segments, current = [], [(xs[0], ys[0])]
        for x, y_prev, y in zip(xs[1:], ys[:-1], ys[1:]):
            if abs(y - y_prev) > jump:
                segments.append(current)
                current = []
            current.append((x, y))
        segments.append(current)
        for seg in segments:
            if len(seg) == 1:
                x, y = seg[0]
                parts.append(
                    f'<circle cx="{px(x):.2f}" cy="{py(y):.2f}" r="2" fill="{color}"/>')
            else:
                pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in seg)
                parts.append(
                    f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        parts.append(
            f'<text x="{width - pad}" y="{pad + 14 * (ci + 1)}" text-anchor="end" '
            f'font-size="11" fill="{color}">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts)
