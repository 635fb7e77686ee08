"""Bare-bones SVG charts: horizontal intervals and line series."""
from __future__ import annotations

from typing import Mapping, Sequence
from xml.sax.saxutils import escape

WIDTH, HEIGHT = 640, 400
MARGIN = dict(left=110, right=30, top=40, bottom=50)
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _doc(body: list[str], title: str) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">'
    )
    t = f'<text x="{WIDTH / 2:.1f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>'
    return "\n".join([head, t, *body, "</svg>"]) + "\n"


def _scale(lo: float, hi: float, a: float, b: float):
    span = (hi - lo) or 1.0
    return lambda v: a + (v - lo) / span * (b - a)


def interval_chart(rows: Sequence[tuple[str, float, float, float]], title: str = "", x_label: str = "") -> str:
    """One row per (label, estimate, low, high): a point with a horizontal bar."""
    lo = min([-1.0] + [r[2] for r in rows])
    hi = max([1.0] + [r[3] for r in rows])
    x0, x1 = MARGIN["left"], WIDTH - MARGIN["right"]
    y0, y1 = MARGIN["top"], HEIGHT - MARGIN["bottom"]
    sx = _scale(lo, hi, x0, x1)
    step = (y1 - y0) / max(len(rows), 1)
    body = [
        f'<line x1="{x0}" y1="{y1}" x2="{x1}" y2="{y1}" stroke="black"/>',
        f'<line x1="{sx(0):.1f}" y1="{y0}" x2="{sx(0):.1f}" y2="{y1}" stroke="#999" stroke-dasharray="4 3"/>',
    ]
    for tick in (lo, (lo + hi) / 2, hi):
        body.append(f'<text x="{sx(tick):.1f}" y="{y1 + 16}" text-anchor="middle">{tick:.2f}</text>')
    body.append(f'<text x="{(x0 + x1) / 2:.1f}" y="{HEIGHT - 12}" text-anchor="middle">{escape(x_label)}</text>')
    for i, (label, est, low, high) in enumerate(rows):
        y = y0 + step * (i + 0.5)
        body.append(f'<text x="{x0 - 8}" y="{y + 4:.1f}" text-anchor="end">{escape(label)}</text>')
        body.append(f'<line x1="{sx(low):.1f}" y1="{y:.1f}" x2="{sx(high):.1f}" y2="{y:.1f}" stroke="black" stroke-width="2"/>')
        body.append(f'<circle cx="{sx(est):.1f}" cy="{y:.1f}" r="4" fill="{PALETTE[0]}"/>')
    return _doc(body, title)


def line_chart(
    series: Mapping[str, Sequence[tuple[float, float]]],
    title: str = "",
    x_label: str = "",
    y_label: str = "",
    y_range: tuple[float, float] = (0.0, 1.0),
) -> str:
    """Polylines, one per named series of (x, y) points."""
    xs = [x for pts in series.values() for x, _ in pts] or [0.0, 1.0]
    x0, x1 = MARGIN["left"], WIDTH - MARGIN["right"]
    y0, y1 = MARGIN["top"], HEIGHT - MARGIN["bottom"]
    sx = _scale(min(xs), max(xs), x0, x1)
    sy = _scale(y_range[0], y_range[1], y1, y0)
    body = [
        f'<line x1="{x0}" y1="{y1}" x2="{x1}" y2="{y1}" stroke="black"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>',
        f'<text x="{(x0 + x1) / 2:.1f}" y="{HEIGHT - 12}" text-anchor="middle">{escape(x_label)}</text>',
        f'<text x="20" y="{(y0 + y1) / 2:.1f}" transform="rotate(-90 20 {(y0 + y1) / 2:.1f})" '
        f'text-anchor="middle">{escape(y_label)}</text>',
    ]
    for v in (y_range[0], sum(y_range) / 2, y_range[1]):
        body.append(f'<text x="{x0 - 6}" y="{sy(v) + 4:.1f}" text-anchor="end">{v:.2f}</text>')
    for k, (name, pts) in enumerate(series.items()):
        color = PALETTE[k % len(PALETTE)]
        path = " ".join(f"{sx(x):.1f},{sy(y):.1f}" for x, y in pts)
        body.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="2"/>')
        body.append(f'<text x="{x1 - 4}" y="{y0 + 14 * (k + 1)}" text-anchor="end" fill="{color}">{escape(name)}</text>')
    return _doc(body, title)
