"""Minimal deterministic SVG charts: line plots, bar charts, heatmaps, trace panels."""

from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
           "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#393b79", "#637939"]


def _fmt(v: float) -> str:
    return f"{v:.2f}"


class _Canvas:
    def __init__(self, width: int, height: int, margin: int = 50):
        self.w, self.h, self.m = width, height, margin
        self.parts: list[str] = []

    def add(self, s: str) -> None:
        self.parts.append(s)

    def text(self, x, y, s, size=12, anchor="middle", rotate=None):
        rot = f' transform="rotate({rotate} {_fmt(x)} {_fmt(y)})"' if rotate else ""
        self.add(f'<text x="{_fmt(x)}" y="{_fmt(y)}" font-size="{size}" '
                 f'text-anchor="{anchor}" font-family="sans-serif"{rot}>{escape(str(s))}</text>')

    def render(self) -> str:
        head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.w}" height="{self.h}" '
                f'viewBox="0 0 {self.w} {self.h}">')
        bg = f'<rect width="{self.w}" height="{self.h}" fill="white"/>'
        return "\n".join([head, bg, *self.parts, "</svg>"]) + "\n"


def _scale(lo, hi, a, b):
    span = hi - lo if hi > lo else 1.0
    return lambda v: a + (np.asarray(v, dtype=float) - lo) / span * (b - a)


def _axes(c: _Canvas, xlo, xhi, ylo, yhi, title, xlabel, ylabel):
    m = c.m
    c.add(f'<rect x="{m}" y="{m}" width="{c.w - 2 * m}" height="{c.h - 2 * m}" '
          'fill="none" stroke="black"/>')
    sx = _scale(xlo, xhi, m, c.w - m)
    sy = _scale(ylo, yhi, c.h - m, m)
    for v in np.linspace(xlo, xhi, 5):
        c.text(float(sx(v)), c.h - m + 16, f"{v:.3g}", size=10)
    for v in np.linspace(ylo, yhi, 5):
        c.text(m - 6, float(sy(v)) + 4, f"{v:.3g}", size=10, anchor="end")
    if title:
        c.text(c.w / 2, m / 2, title, size=14)
    if xlabel:
        c.text(c.w / 2, c.h - 10, xlabel)
    if ylabel:
        c.text(14, c.h / 2, ylabel, rotate=-90)
    return sx, sy


def _polyline(xs, ys, color, width=1.5):
    pts = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(xs, ys))
    return f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="{width}"/>'


def line_plot(series: dict, path=None, title="", xlabel="", ylabel="",
              width=640, height=400, ylim=None) -> str:
    """``series`` maps a legend label to an ``(x, y)`` pair of sequences."""
    c = _Canvas(width, height)
    xs = np.concatenate([np.asarray(x, dtype=float) for x, _ in series.values()])
    ys = np.concatenate([np.asarray(y, dtype=float) for _, y in series.values()])
    ylo, yhi = ylim if ylim else (float(ys.min()), float(ys.max()))
    sx, sy = _axes(c, float(xs.min()), float(xs.max()), ylo, yhi, title, xlabel, ylabel)
    for i, (label, (x, y)) in enumerate(series.items()):
        color = PALETTE[i % len(PALETTE)]
        c.add(_polyline(sx(x), sy(y), color, 2))
        ly = c.m + 16 + 16 * i
        c.add(f'<line x1="{c.w - c.m - 120}" y1="{ly - 4}" x2="{c.w - c.m - 100}" '
              f'y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        c.text(c.w - c.m - 95, ly, label, size=11, anchor="start")
    return _finish(c, path)


def bar_chart(labels, values, path=None, title="", ylabel="", width=640, height=400) -> str:
    c = _Canvas(width, height, margin=60)
    v = np.asarray(values, dtype=float)
    lo, hi = min(0.0, float(v.min(initial=0.0))), max(0.0, float(v.max(initial=0.0)))
    if hi == lo:
        hi = lo + 1.0
    m = c.m
    sy = _scale(lo, hi, c.h - m, m)
    c.add(f'<line x1="{m}" y1="{_fmt(float(sy(0)))}" x2="{c.w - m}" y2="{_fmt(float(sy(0)))}" '
          'stroke="black"/>')
    bw = (c.w - 2 * m) / max(len(v), 1)
    for i, (lab, val) in enumerate(zip(labels, v)):
        x0 = m + i * bw + 0.1 * bw
        top, bot = sorted((float(sy(val)), float(sy(0))))
        c.add(f'<rect x="{_fmt(x0)}" y="{_fmt(top)}" width="{_fmt(0.8 * bw)}" '
              f'height="{_fmt(bot - top)}" fill="{PALETTE[0]}"/>')
        c.text(x0 + 0.4 * bw, c.h - m + 14, lab, size=9, rotate=-45 if len(v) > 8 else None)
    for t in np.linspace(lo, hi, 5):
        c.text(m - 6, float(sy(t)) + 4, f"{t:.3g}", size=10, anchor="end")
    if title:
        c.text(c.w / 2, m / 2, title, size=14)
    if ylabel:
        c.text(14, c.h / 2, ylabel, rotate=-90)
    return _finish(c, path)


def _diverging(v: float) -> str:
    """Blue (-1) through white (0) to red (+1)."""
    v = float(np.clip(v, -1, 1))
    if v >= 0:
        r, g, b = 255, int(255 * (1 - v)), int(255 * (1 - v))
    else:
        r, g, b = int(255 * (1 + v)), int(255 * (1 + v)), 255
    return f"#{r:02x}{g:02x}{b:02x}"


def heatmap(matrix, row_labels, col_labels, path=None, title="", cell=22) -> str:
    """Diverging heatmap for values in [-1, 1] (e.g. rank correlations)."""
    M = np.asarray(matrix, dtype=float)
    left, top = 90, 60
    c = _Canvas(left + cell * M.shape[1] + 20, top + cell * M.shape[0] + 30, margin=0)
    for i in range(M.shape[0]):
        c.text(left - 4, top + cell * i + cell * 0.7, row_labels[i], size=9, anchor="end")
        for j in range(M.shape[1]):
            c.add(f'<rect x="{left + cell * j}" y="{top + cell * i}" width="{cell}" '
                  f'height="{cell}" fill="{_diverging(M[i, j])}"/>')
    for j, lab in enumerate(col_labels):
        c.text(left + cell * j + cell / 2, top - 6, lab, size=9, anchor="start", rotate=-60)
    if title:
        c.text(c.w / 2, 16, title, size=13)
    return _finish(c, path)


def trace_panel(values, path=None, title="", lead_names=None, width=480, height_per_lead=90) -> str:
    """One stacked row per lead, e.g. a centroid or a saliency-shaded record."""
    V = np.atleast_2d(np.asarray(values, dtype=float))
    n_leads, n = V.shape
    c = _Canvas(width, 40 + height_per_lead * n_leads, margin=30)
    x = _scale(0, max(n - 1, 1), c.m, c.w - 10)(np.arange(n))
    for k in range(n_leads):
        row = V[k]
        lo, hi = float(row.min()), float(row.max())
        y0 = 30 + height_per_lead * k
        sy = _scale(lo, hi, y0 + height_per_lead - 10, y0 + 5)
        c.add(_polyline(x, sy(row), PALETTE[k % len(PALETTE)]))
        name = lead_names[k] if lead_names else f"lead {k}"
        c.text(4, y0 + height_per_lead / 2, name, size=10, anchor="start")
    if title:
        c.text(c.w / 2, 18, title, size=13)
    return _finish(c, path)


def _finish(c: _Canvas, path) -> str:
    svg = c.render()
    if path is not None:
        Path(path).write_text(svg)
    return svg
