"""Static SVG line plots and histograms with deterministic bytes."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 640, 420
MARGIN = (60, 20, 30, 50)  # left, right, top, bottom
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _fmt(v: float) -> str:
    return f"{v:.6g}"


class _Frame:
    def __init__(self, xlim, ylim):
        self.x0, self.x1 = xlim
        self.y0, self.y1 = ylim
        if self.x1 == self.x0:
            self.x1 = self.x0 + 1.0
        if self.y1 == self.y0:
            self.y1 = self.y0 + 1.0

    def px(self, x):
        l, r = MARGIN[0], WIDTH - MARGIN[1]
        return l + (np.asarray(x, dtype=float) - self.x0) / (self.x1 - self.x0) * (r - l)

    def py(self, y):
        t, b = MARGIN[2], HEIGHT - MARGIN[3]
        return b - (np.asarray(y, dtype=float) - self.y0) / (self.y1 - self.y0) * (b - t)


def _axes(f: _Frame, title: str, xlabel: str, ylabel: str) -> list[str]:
    l, r = MARGIN[0], WIDTH - MARGIN[1]
    t, b = MARGIN[2], HEIGHT - MARGIN[3]
    out = [
        f'<rect x="{l}" y="{t}" width="{r - l}" height="{b - t}" fill="none" stroke="#000"/>',
        f'<text x="{WIDTH / 2}" y="{t - 10}" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<text x="{WIDTH / 2}" y="{HEIGHT - 10}" text-anchor="middle" font-size="12">{escape(xlabel)}</text>',
        f'<text x="15" y="{HEIGHT / 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 15 {HEIGHT / 2})">{escape(ylabel)}</text>',
    ]
    for k in range(5):
        xv = f.x0 + k * (f.x1 - f.x0) / 4
        yv = f.y0 + k * (f.y1 - f.y0) / 4
        out.append(f'<text x="{_fmt(f.px(xv))}" y="{b + 15}" text-anchor="middle" font-size="10">{_fmt(xv)}</text>')
        out.append(f'<text x="{l - 5}" y="{_fmt(f.py(yv) + 3)}" text-anchor="end" font-size="10">{_fmt(yv)}</text>')
    return out


def _wrap(body: list[str]) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">'
    )
    return "\n".join([head, '<rect width="100%" height="100%" fill="#fff"/>', *body, "</svg>", ""])


def line_plot(series: dict, title: str = "", xlabel: str = "", ylabel: str = "") -> str:
    """``series`` maps a label to ``(x, y)`` arrays; non-finite points are dropped."""
    xs = np.concatenate([np.asarray(x, dtype=float) for x, _ in series.values()])
    ys = np.concatenate([np.asarray(y, dtype=float) for _, y in series.values()])
    ok = np.isfinite(xs) & np.isfinite(ys)
    f = _Frame((xs[ok].min(), xs[ok].max()), (ys[ok].min(), ys[ok].max()))
    body = _axes(f, title, xlabel, ylabel)
    for k, (label, (x, y)) in enumerate(series.items()):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        m = np.isfinite(x) & np.isfinite(y)
        pts = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(f.px(x[m]), f.py(y[m])))
        c = COLORS[k % len(COLORS)]
        body.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{pts}"/>')
        body.append(
            f'<text x="{WIDTH - MARGIN[1] - 5}" y="{MARGIN[2] + 15 * (k + 1)}" text-anchor="end" '
            f'font-size="11" fill="{c}">{escape(str(label))}</text>'
        )
    return _wrap(body)


def histogram_vs_normal(standardized, bins: int = 40, title: str = "") -> str:
    """Density histogram of standardized values with the N(0, 1) density overlaid."""
    z = np.asarray(standardized, dtype=float)
    lo, hi = min(-4.0, float(z.min())), max(4.0, float(z.max()))
    dens, edges = np.histogram(z, bins=bins, range=(lo, hi), density=True)
    grid = np.linspace(lo, hi, 301)
    phi = np.exp(-0.5 * grid**2) / math.sqrt(2 * math.pi)
    f = _Frame((lo, hi), (0.0, max(float(dens.max()), float(phi.max())) * 1.05))
    body = _axes(f, title, "standardized value", "density")
    for d, a, b in zip(dens, edges[:-1], edges[1:]):
        x, w = f.px(a), f.px(b) - f.px(a)
        y = f.py(d)
        body.append(
            f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(w)}" height="{_fmt(f.py(0) - y)}" '
            f'fill="#9ecae1" stroke="#3182bd"/>'
        )
    pts = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(f.px(grid), f.py(phi)))
    body.append(f'<polyline fill="none" stroke="#d62728" stroke-width="1.5" points="{pts}"/>')
    return _wrap(body)
