"""Minimal static SVG 1.1 line plots.

Output depends only on the input numbers: fixed canvas size, fixed palette,
fixed three-decimal coordinates, no timestamps.
"""
from __future__ import annotations

from dataclasses import dataclass
from xml.sax.saxutils import escape

import numpy as np

WIDTH, PANEL_H = 640, 300
MARGIN = 50
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")


@dataclass
class Series:
    label: str
    x: np.ndarray
    y: np.ndarray
    kind: str = "line"  # or "points"


def _c(v: float) -> str:
    return f"{v:.3f}"


def _limits(series):
    xs = np.concatenate([s.x for s in series])
    ys = np.concatenate([s.y for s in series])
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    if x1 == x0:
        x0, x1 = x0 - 1, x1 + 1
    if y1 == y0:
        pad = abs(y0) * 0.1 or 1.0
        y0, y1 = y0 - pad, y1 + pad
    return x0, x1, y0, y1


def panel(series: list, title: str, top: float) -> list:
    """SVG elements for one framed panel whose top edge sits at ``top``."""
    if not series or any(s.x.size == 0 for s in series):
        raise ValueError(f"panel {title!r} has no data")
    x0, x1, y0, y1 = _limits(series)
    w, h = WIDTH - 2 * MARGIN, PANEL_H - 2 * MARGIN

    def px(x):
        return MARGIN + (x - x0) / (x1 - x0) * w

    def py(y):
        return top + MARGIN + (1 - (y - y0) / (y1 - y0)) * h

    out = [f'<g class="panel" id="{escape(title)}">']
    out.append(f'<rect x="{MARGIN}" y="{_c(top + MARGIN)}" width="{w}" height="{h}" '
               f'fill="none" stroke="#000000"/>')
    out.append(f'<text x="{MARGIN}" y="{_c(top + MARGIN - 10)}" font-size="14">{escape(title)}</text>')
    out.append(f'<text x="{MARGIN}" y="{_c(top + PANEL_H - 20)}" font-size="10">{_c(x0)}</text>')
    out.append(f'<text x="{WIDTH - MARGIN}" y="{_c(top + PANEL_H - 20)}" font-size="10" '
               f'text-anchor="end">{_c(x1)}</text>')
    out.append(f'<text x="5" y="{_c(py(y1) + 4)}" font-size="10">{_c(y1)}</text>')
    out.append(f'<text x="5" y="{_c(py(y0))}" font-size="10">{_c(y0)}</text>')
    for i, s in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        label = escape(s.label)
        if s.kind == "points":
            for x, y in zip(s.x, s.y):
                out.append(f'<circle class="{label}" cx="{_c(px(x))}" cy="{_c(py(y))}" r="3" '
                           f'fill="none" stroke="{color}"/>')
        else:
            pts = " ".join(f"{_c(px(x))},{_c(py(y))}" for x, y in zip(s.x, s.y))
            out.append(f'<polyline class="{label}" points="{pts}" fill="none" stroke="{color}"/>')
    out.append("</g>")
    return out


def render(panels: list) -> str:
    """``panels`` is a list of ``(title, [Series, ...])`` stacked vertically."""
    height = PANEL_H * len(panels)
    body = []
    for i, (title, series) in enumerate(panels):
        body.extend(panel(series, title, i * PANEL_H))
    head = (
        '<?xml version="1.0" encoding="UTF-8"?>\n'
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{height}" '
        f'viewBox="0 0 {WIDTH} {height}">'
    )
    return "\n".join([head, f'<rect width="{WIDTH}" height="{height}" fill="#ffffff"/>', *body, "</svg>"]) + "\n"
