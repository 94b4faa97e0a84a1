"""Minimal standalone SVG line plots.

Output depends only on the input numbers, so identical data gives identical
bytes. Each series becomes one ``<polyline>``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

__all__ = ["PlotStyle", "render_plot", "nice_ticks", "log_ticks"]

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")


@dataclass(frozen=True)
class PlotStyle:
    title: str = ""
    xlabel: str = ""
    ylabel: str = ""
    logx: bool = False
    logy: bool = False
    width: int = 640
    height: int = 420
    markers: bool = False


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _label(v: float) -> str:
    if v == 0:
        return "0"
    if abs(v) >= 1e4 or abs(v) < 1e-3:
        return f"{v:.0e}".replace("e-0", "e-").replace("e+0", "e").replace("e+", "e")
    return f"{v:.6g}"


def nice_ticks(lo: float, hi: float, target: int = 6) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / target
    mag = 10 ** math.floor(math.log10(raw))
    step = min((s * mag for s in (1, 2, 2.5, 5, 10) if s * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step - 1e-9)
    stop = math.floor(hi / step + 1e-9)
    return [round(k * step, 12) for k in range(start, stop + 1)]


def log_ticks(lo: float, hi: float) -> list[float]:
    a, b = math.floor(math.log10(lo) + 1e-9), math.ceil(math.log10(hi) - 1e-9)
    every = max(1, (b - a) // 8)
    return [10.0**k for k in range(a, b + 1, every) if lo * (1 - 1e-9) <= 10.0**k <= hi * (1 + 1e-9)]


def _range(vals: np.ndarray, log: bool) -> tuple[float, float]:
    if log:
        vals = vals[vals > 0]
        if vals.size == 0:
            raise ValueError("log axis needs positive values")
        lo, hi = float(vals.min()), float(vals.max())
        if lo == hi:
            lo, hi = lo / 10, hi * 10
        return 10 ** math.floor(math.log10(lo) + 1e-9), 10 ** math.ceil(math.log10(hi) - 1e-9)
    lo, hi = float(vals.min()), float(vals.max())
    if lo == hi:
        lo, hi = lo - 1.0, hi + 1.0
    pad = 0.04 * (hi - lo)
    return lo - pad, hi + pad


def render_plot(series: dict, style: PlotStyle, path) -> Path:
    """Write an SVG with one polyline per named series of (x, y) pairs."""
    if not series:
        raise ValueError("no series to plot")
    data = {}
    for name, pts in series.items():
        arr = np.asarray(pts, dtype=float).reshape(-1, 2)
        keep = np.all(np.isfinite(arr), axis=1)
        if style.logx:
            keep &= arr[:, 0] > 0
        if style.logy:
            keep &= arr[:, 1] > 0
        arr = arr[keep]
        if arr.size == 0:
            raise ValueError(f"series {name!r} has no plottable points")
        data[str(name)] = arr
    allpts = np.concatenate(list(data.values()))
    x0, x1 = _range(allpts[:, 0], style.logx)
    y0, y1 = _range(allpts[:, 1], style.logy)

    W, H = style.width, style.height
    left, right, top, bottom = 72, 150, 36, 52
    pw, ph = W - left - right, H - top - bottom

    def tx(v):
        t = (math.log10(v) - math.log10(x0)) / (math.log10(x1) - math.log10(x0)) if style.logx \
            else (v - x0) / (x1 - x0)
        return left + t * pw

    def ty(v):
        t = (math.log10(v) - math.log10(y0)) / (math.log10(y1) - math.log10(y0)) if style.logy \
            else (v - y0) / (y1 - y0)
        return top + (1 - t) * ph

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{W}" height="{H}" '
        f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">',
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    xt = log_ticks(x0, x1) if style.logx else nice_ticks(x0, x1)
    yt = log_ticks(y0, y1) if style.logy else nice_ticks(y0, y1)
    for v in xt:
        X = _fmt(tx(v))
        out.append(f'<line x1="{X}" y1="{top + ph}" x2="{X}" y2="{top + ph + 5}" stroke="black"/>')
        out.append(f'<text class="xtick" x="{X}" y="{top + ph + 18}" text-anchor="middle">{_label(v)}</text>')
    for v in yt:
        Y = _fmt(ty(v))
        out.append(f'<line x1="{left - 5}" y1="{Y}" x2="{left}" y2="{Y}" stroke="black"/>')
        out.append(f'<text class="ytick" x="{left - 8}" y="{Y}" text-anchor="end" '
                   f'dominant-baseline="middle">{_label(v)}</text>')
    if style.title:
        out.append(f'<text x="{left + pw / 2:.1f}" y="20" text-anchor="middle" font-size="13">'
                   f'{escape(style.title)}</text>')
    if style.xlabel:
        out.append(f'<text x="{left + pw / 2:.1f}" y="{H - 12}" text-anchor="middle">'
                   f'{escape(style.xlabel)}</text>')
    if style.ylabel:
        out.append(f'<text x="16" y="{top + ph / 2:.1f}" text-anchor="middle" '
                   f'transform="rotate(-90 16 {top + ph / 2:.1f})">{escape(style.ylabel)}</text>')
    for k, (name, arr) in enumerate(data.items()):
        color = PALETTE[k % len(PALETTE)]
        pts = " ".join(f"{_fmt(tx(x))},{_fmt(ty(y))}" for x, y in arr)
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        if style.markers:
            for x, y in arr:
                out.append(f'<circle cx="{_fmt(tx(x))}" cy="{_fmt(ty(y))}" r="2.5" fill="{color}"/>')
        ly = top + 14 + 18 * k
        out.append(f'<line x1="{left + pw + 12}" y1="{ly}" x2="{left + pw + 36}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw + 42}" y="{ly}" dominant-baseline="middle">{escape(name)}</text>')
    out.append("</svg>")
    path = Path(path)
    path.write_text("\n".join(out) + "\n", encoding="utf-8")
    return path
