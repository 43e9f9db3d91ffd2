"""Standalone SVG 1.1 charts with byte-stable output.

Coordinates are written with 6 significant digits and elements are emitted in
input order, so identical inputs give identical files.
"""

from __future__ import annotations

import math
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
FONT = 'font-family="sans-serif"'


def _n(v: float) -> str:
    return format(float(v), ".6g")


def _pts(xs, ys) -> str:
    return " ".join(f"{_n(x)},{_n(y)}" for x, y in zip(xs, ys))


class Canvas:
    def __init__(self, width: float, height: float):
        self.width = width
        self.height = height
        self.parts: list[str] = []

    def add(self, s: str):
        self.parts.append(s)

    def rect(self, x, y, w, h, fill="none", stroke="#000", extra=""):
        self.add(f'<rect x="{_n(x)}" y="{_n(y)}" width="{_n(w)}" height="{_n(h)}" fill="{fill}" stroke="{stroke}"{extra}/>')

    def line(self, x1, y1, x2, y2, stroke="#000", width=1.0, extra=""):
        self.add(
            f'<line x1="{_n(x1)}" y1="{_n(y1)}" x2="{_n(x2)}" y2="{_n(y2)}" stroke="{stroke}" stroke-width="{_n(width)}"{extra}/>'
        )

    def polyline(self, xs, ys, stroke="#000", width=1.5, opacity=1.0):
        op = "" if opacity == 1.0 else f' stroke-opacity="{_n(opacity)}"'
        self.add(f'<polyline points="{_pts(xs, ys)}" fill="none" stroke="{stroke}" stroke-width="{_n(width)}"{op}/>')

    def polygon(self, xs, ys, fill="#000", opacity=0.3):
        self.add(f'<polygon points="{_pts(xs, ys)}" fill="{fill}" fill-opacity="{_n(opacity)}" stroke="none"/>')

    def circle(self, x, y, r, fill, opacity=1.0):
        self.add(f'<circle cx="{_n(x)}" cy="{_n(y)}" r="{_n(r)}" fill="{fill}" fill-opacity="{_n(opacity)}"/>')

    def text(self, x, y, s, size=11, anchor="middle", extra=""):
        self.add(
            f'<text x="{_n(x)}" y="{_n(y)}" font-size="{_n(size)}" text-anchor="{anchor}" {FONT}{extra}>{escape(str(s))}</text>'
        )

    def render(self) -> str:
        head = (
            '<?xml version="1.0" encoding="UTF-8" standalone="no"?>\n'
            '<!DOCTYPE svg PUBLIC "-//W3C//DTD SVG 1.1//EN" "http://www.w3.org/Graphics/SVG/1.1/DTD/svg11.dtd">\n'
            f'<svg version="1.1" xmlns="http://www.w3.org/2000/svg" width="{_n(self.width)}" height="{_n(self.height)}" '
            f'viewBox="0 0 {_n(self.width)} {_n(self.height)}">\n'
            f'<rect x="0" y="0" width="{_n(self.width)}" height="{_n(self.height)}" fill="#fff"/>\n'
        )
        return head + "\n".join(self.parts) + "\n</svg>\n"


class Scale:
    def __init__(self, lo, hi, a, b, pad=0.04):
        lo, hi = float(lo), float(hi)
        if not hi > lo:
            lo, hi = lo - 0.5, hi + 0.5
        d = (hi - lo) * pad
        self.lo, self.hi, self.a, self.b = lo - d, hi + d, a, b

    def __call__(self, v):
        return self.a + (np.asarray(v, dtype=float) - self.lo) / (self.hi - self.lo) * (self.b - self.a)

    def ticks(self, n=4):
        step = _nice((self.hi - self.lo) / n)
        start = math.ceil(self.lo / step) * step
        return [round(start + i * step, 10) for i in range(int((self.hi - start) / step) + 1)]


def _nice(x: float) -> float:
    e = math.floor(math.log10(x))
    f = x / 10**e
    return (1 if f < 1.5 else 2 if f < 3.5 else 5 if f < 7.5 else 10) * 10**e


def _axes(c: Canvas, x0, y0, w, h, sx: Scale | None, sy: Scale | None, size=9):
    c.rect(x0, y0, w, h, stroke="#888")
    if sx is not None:
        for t in sx.ticks():
            x = float(sx(t))
            c.line(x, y0 + h, x, y0 + h + 3, stroke="#888")
            c.text(x, y0 + h + 13, _n(t), size=size)
    if sy is not None:
        for t in sy.ticks():
            y = float(sy(t))
            c.line(x0 - 3, y, x0, y, stroke="#888")
            c.text(x0 - 5, y + 3, _n(t), size=size, anchor="end")


def pdp_grid(profiles: Sequence, title: str = "Partial dependence profiles") -> str:
    """One panel per (model, feature): rows are models, columns are features.

    Profiles carrying bootstrap bands get a shaded band behind the curve.
    """
    if not profiles:
        raise ValueError("no partial dependence profiles to plot")
    models = list(dict.fromkeys(p.model for p in profiles))
    features = list(dict.fromkeys(p.feature for p in profiles))
    by_key = {(p.model, p.feature): p for p in profiles}
    lo = min(float(np.min(p.ci_lo if p.has_ci else p.pd)) for p in profiles)
    hi = max(float(np.max(p.ci_hi if p.has_ci else p.pd)) for p in profiles)
    pw, ph, ml, mt, gap = 190, 140, 60, 50, 30
    c = Canvas(ml + len(features) * (pw + gap) + 20, mt + len(models) * (ph + gap) + 20)
    c.text(c.width / 2, 22, title, size=15)
    for i, m in enumerate(models):
        color = PALETTE[i % len(PALETTE)]
        for j, f in enumerate(features):
            x0 = ml + j * (pw + gap)
            y0 = mt + i * (ph + gap)
            p = by_key.get((m, f))
            if p is None:
                c.rect(x0, y0, pw, ph, stroke="#ddd")
                continue
            sx = Scale(p.grid.min(), p.grid.max(), x0, x0 + pw)
            sy = Scale(lo, hi, y0 + ph, y0)
            _axes(c, x0, y0, pw, ph, sx, sy if j == 0 else None)
            if p.has_ci:
                xs = np.concatenate([sx(p.grid), sx(p.grid[::-1])])
                ys = np.concatenate([sy(p.ci_hi), sy(p.ci_lo[::-1])])
                c.polygon(xs, ys, fill=color, opacity=0.3)
            c.polyline(sx(p.grid), sy(p.pd), stroke=color, width=1.8)
            if i == 0:
                c.text(x0 + pw / 2, y0 - 8, f, size=12)
            if j == len(features) - 1:
                c.text(x0 + pw + 8, y0 + ph / 2, m, size=11, anchor="start", extra=f' fill="{color}"')
    return c.render()


def residual_parcoord(rt, max_lines: int | None = None) -> str:
    """Parallel coordinates: one vertical axis per model, one line per observation."""
    res = np.asarray(rt.residuals)
    if res.size == 0 or res.shape[0] == 0:
        raise ValueError("residual table is empty")
    if max_lines is not None:
        res = res[:max_lines]
    k = res.shape[1]
    ml, mt, w, h = 60, 50, max(200, 150 * (k - 1)), 360
    c = Canvas(ml + w + 40, mt + h + 50)
    c.text(c.width / 2, 22, "Residuals by model", size=15)
    xs = [ml + (w * a / (k - 1) if k > 1 else w / 2) for a in range(k)]
    sy = Scale(res.min(), res.max(), mt + h, mt)
    for t in sy.ticks():
        c.text(ml - 8, float(sy(t)) + 3, _n(t), size=9, anchor="end")
    opacity = min(0.6, max(0.02, 30.0 / res.shape[0]))
    for row in res:
        c.polyline(xs, sy(row), stroke="#1f77b4", width=0.6, opacity=opacity)
    for a, label in enumerate(rt.labels):
        c.line(xs[a], mt, xs[a], mt + h, stroke="#333")
        c.text(xs[a], mt + h + 20, label, size=11)
    return c.render()


def _correlation(a, b) -> float:
    a = a - a.mean()
    b = b - b.mean()
    d = math.sqrt(float(a @ a) * float(b @ b))
    return float(a @ b) / d if d > 0 else float("nan")


def pairs_matrix(datasets: Sequence, labels: Sequence[str], max_points: int | None = 1000) -> str:
    """Scatter matrix over the shared columns, coloured by dataset.

    Lower panels scatter the first ``max_points`` rows of each set, diagonal
    panels overlay histograms, upper panels print per-set correlations.
    """
    if not datasets or any(d.n_rows == 0 for d in datasets):
        raise ValueError("pairs matrix needs non-empty datasets")
    cols = list(datasets[0].column_names)
    if any(list(d.column_names) != cols for d in datasets):
        raise ValueError("datasets must share the same columns")
    k = len(cols)
    size, gap, ml, mt = 150, 12, 50, 50
    c = Canvas(ml + k * (size + gap) + 110, mt + k * (size + gap) + 30)
    c.text(c.width / 2, 22, "Variable distributions", size=15)
    full = np.vstack([d.rows for d in datasets])
    scales = [(full[:, j].min(), full[:, j].max()) for j in range(k)]
    for i in range(k):
        for j in range(k):
            x0 = ml + j * (size + gap)
            y0 = mt + i * (size + gap)
            sx = Scale(*scales[j], x0, x0 + size)
            _axes(c, x0, y0, size, size, sx if i == k - 1 else None, None)
            if i == 0:
                c.text(x0 + size / 2, y0 - 8, cols[j], size=12)
            if i == j:
                edges = np.linspace(sx.lo, sx.hi, 26)
                for s, d in enumerate(datasets):
                    hist, _ = np.histogram(d.rows[:, j], bins=edges, density=True)
                    top = max(1e-12, max(float(np.max(np.histogram(e.rows[:, j], bins=edges, density=True)[0])) for e in datasets))
                    ys = y0 + size - hist / top * (size - 10)
                    xs = np.repeat(sx(edges), 2)[1:-1]
                    c.polyline(xs, np.repeat(ys, 2), stroke=PALETTE[s % len(PALETTE)], width=1.2)
            elif i > j:
                sy = Scale(*scales[i], y0 + size, y0)
                for s, d in enumerate(datasets):
                    rows = d.rows if max_points is None else d.rows[:max_points]
                    for xv, yv in zip(sx(rows[:, j]), sy(rows[:, i])):
                        c.circle(xv, yv, 1.0, PALETTE[s % len(PALETTE)], opacity=0.3)
            else:
                for s, d in enumerate(datasets):
                    r = _correlation(d.rows[:, i], d.rows[:, j])
                    c.text(
                        x0 + size / 2,
                        y0 + size / 2 - 8 * (len(datasets) - 1) + 16 * s,
                        f"{labels[s]}: {r:.3f}",
                        size=11,
                        extra=f' fill="{PALETTE[s % len(PALETTE)]}"',
                    )
    for s, lab in enumerate(labels):
        c.text(c.width - 100, mt + 20 + 16 * s, lab, size=12, anchor="start", extra=f' fill="{PALETTE[s % len(PALETTE)]}"')
    return c.render()


def couple_curves(alpha: float, b1: float, b0: float, n: int = 401) -> str:
    """True curve sign(x)|x|^alpha with the best slope and best stump on [-1, 1]."""
    x = np.linspace(-1.0, 1.0, n)
    f = np.sign(x) * np.abs(x) ** alpha
    ml, mt, w, h = 50, 40, 360, 300
    c = Canvas(ml + w + 150, mt + h + 40)
    sx = Scale(-1, 1, ml, ml + w)
    sy = Scale(-max(1.0, b1), max(1.0, b1), mt + h, mt)
    _axes(c, ml, mt, w, h, sx, sy)
    c.text(ml + w / 2, 22, f"alpha = {alpha:.6f}", size=14)
    c.polyline(sx(x), sy(b1 * x), stroke=PALETTE[0], width=2)
    neg = x < 0
    c.polyline(sx(x[neg]), sy(np.full(neg.sum(), -b0)), stroke=PALETTE[1], width=2)
    c.polyline(sx(x[~neg]), sy(np.full((~neg).sum(), b0)), stroke=PALETTE[1], width=2)
    c.polyline(sx(x), sy(f), stroke="#000", width=2)
    for i, (lab, col) in enumerate((("true f(x)", "#000"), (f"slope b1={b1:.4f}", PALETTE[0]), (f"stump b0={b0:.4f}", PALETTE[1]))):
        c.text(ml + w + 12, mt + 20 + 18 * i, lab, size=12, anchor="start", extra=f' fill="{col}"')
    return c.render()
