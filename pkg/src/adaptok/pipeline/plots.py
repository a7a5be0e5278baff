"""Minimal SVG line and bar charts (no plotting dependency)."""

from __future__ import annotations

import math
from html import escape
from pathlib import Path

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f"]
W, H = 640, 400
PAD_L, PAD_R, PAD_T, PAD_B = 70, 150, 40, 55


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if not math.isfinite(lo) or not math.isfinite(hi):
        return []
    if hi == lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    out = []
    v = start
    while v <= hi + 1e-12 * abs(hi):
        out.append(round(v, 12))
        v += step
    return out


def _fmt(v: float) -> str:
    return f"{v:.3g}"


class _Canvas:
    def __init__(self, title, xlabel, ylabel):
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">',
            f'<rect width="{W}" height="{H}" fill="white"/>',
            f'<text x="{(W - PAD_R + PAD_L) / 2}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>',
            f'<text x="{(W - PAD_R + PAD_L) / 2}" y="{H - 12}" text-anchor="middle">{escape(xlabel)}</text>',
            f'<text x="16" y="{(H - PAD_B + PAD_T) / 2}" text-anchor="middle" '
            f'transform="rotate(-90 16 {(H - PAD_B + PAD_T) / 2})">{escape(ylabel)}</text>',
        ]

    def axes(self, xlo, xhi, ylo, yhi, xticks=None, xlabels=None):
        self.xlo, self.xhi = xlo, xhi if xhi > xlo else xlo + 1
        self.ylo, self.yhi = ylo, yhi if yhi > ylo else ylo + 1
        x0, y0, x1, y1 = PAD_L, H - PAD_B, W - PAD_R, PAD_T
        self.parts.append(f'<polyline points="{x0},{y1} {x0},{y0} {x1},{y0}" fill="none" stroke="black"/>')
        for t in _ticks(self.ylo, self.yhi):
            y = self.py(t)
            self.parts.append(f'<line x1="{x0 - 4}" y1="{y:.1f}" x2="{x0}" y2="{y:.1f}" stroke="black"/>')
            self.parts.append(f'<text x="{x0 - 6}" y="{y + 4:.1f}" text-anchor="end">{_fmt(t)}</text>')
        ticks = xticks if xticks is not None else _ticks(self.xlo, self.xhi)
        labels = xlabels if xlabels is not None else [_fmt(t) for t in ticks]
        for t, lab in zip(ticks, labels):
            x = self.px(t)
            self.parts.append(f'<line x1="{x:.1f}" y1="{y0}" x2="{x:.1f}" y2="{y0 + 4}" stroke="black"/>')
            self.parts.append(f'<text x="{x:.1f}" y="{y0 + 17}" text-anchor="middle">{escape(str(lab))}</text>')

    def px(self, x):
        return PAD_L + (x - self.xlo) / (self.xhi - self.xlo) * (W - PAD_L - PAD_R)

    def py(self, y):
        return H - PAD_B - (y - self.ylo) / (self.yhi - self.ylo) * (H - PAD_B - PAD_T)

    def legend(self, names):
        for i, name in enumerate(names):
            y = PAD_T + 10 + 18 * i
            c = PALETTE[i % len(PALETTE)]
            self.parts.append(f'<rect x="{W - PAD_R + 12}" y="{y - 9}" width="12" height="10" fill="{c}"/>')
            self.parts.append(f'<text x="{W - PAD_R + 30}" y="{y}">{escape(str(name))}</text>')

    def write(self, path):
        Path(path).write_text("\n".join(self.parts + ["</svg>"]) + "\n")


def _finite(vals):
    return [v for v in vals if v is not None and math.isfinite(v)]


def line_plot(series: dict, path, title: str = "", xlabel: str = "", ylabel: str = "", logx: bool = False):
    """``series`` maps a name to (xs, ys). Non-finite points break the line."""
    cv = _Canvas(title, xlabel, ylabel)
    tx = (lambda v: math.log10(v)) if logx else (lambda v: v)
    xs = _finite([tx(x) for xs, _ in series.values() for x in xs if (x > 0 or not logx)])
    ys = _finite([y for _, ys in series.values() for y in ys])
    if not xs or not ys:
        xs, ys = [0, 1], [0, 1]
    pad = 0.05 * (max(ys) - min(ys) or 1.0)
    xticks = xlabels = None
    if logx:
        xticks = sorted({tx(x) for s in series.values() for x in s[0] if x > 0})
        xlabels = [_fmt(10**t) for t in xticks]
    cv.axes(min(xs), max(xs), min(ys) - pad, max(ys) + pad, xticks, xlabels)
    for i, (name, (sx, sy)) in enumerate(series.items()):
        c = PALETTE[i % len(PALETTE)]
        segs, seg = [], []
        for x, y in zip(sx, sy):
            if y is not None and math.isfinite(y) and (x > 0 or not logx):
                seg.append(f"{cv.px(tx(x)):.1f},{cv.py(y):.1f}")
            elif seg:
                segs.append(seg)
                seg = []
        segs.append(seg)
        for s in filter(None, segs):
            cv.parts.append(f'<polyline points="{" ".join(s)}" fill="none" stroke="{c}" stroke-width="1.5"/>')
    cv.legend(series.keys())
    cv.write(path)


def bar_plot(values: dict, path, title: str = "", ylabel: str = "", ymax: float | None = None):
    """One bar per (label, value)."""
    cv = _Canvas(title, "", ylabel)
    names = list(values)
    top = ymax if ymax is not None else max(_finite(list(values.values())) or [1.0]) * 1.1
    n = max(len(names), 1)
    cv.axes(-0.5, n - 0.5, 0.0, top, list(range(n)), names)
    width = (W - PAD_L - PAD_R) / n * 0.6
    for i, name in enumerate(names):
        v = values[name]
        if v is None or not math.isfinite(v):
            continue
        x = cv.px(i) - width / 2
        y = cv.py(v)
        c = PALETTE[i % len(PALETTE)]
        cv.parts.append(f'<rect x="{x:.1f}" y="{y:.1f}" width="{width:.1f}" height="{cv.py(0) - y:.1f}" fill="{c}"/>')
        cv.parts.append(f'<text x="{cv.px(i):.1f}" y="{y - 4:.1f}" text-anchor="middle">{_fmt(v)}</text>')
    cv.write(path)
