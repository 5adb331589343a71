"""Self-contained log-log SVG plots of convergence reports."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

__all__ = ["convergence_svg"]

_COLOURS = {"err_u": "#1f77b4", "err_grad": "#2ca02c", "err_hess": "#d62728"}
_W, _H, _PAD = 560, 420, 60


def _ticks(lo: float, hi: float) -> list[int]:
    return list(range(math.floor(lo), math.ceil(hi) + 1))


def convergence_svg(report, title: str = "", guides=(1, 2)) -> str:
    """SVG text plotting ``err_u``, ``err_grad``, ``err_hess`` against ``h``.

    Dashed guide lines of the given slopes start at the coarsest data point of
    ``err_u``.
    """
    h = report.column("h")
    series = {name: report.column(name) for name in _COLOURS}
    logs = [np.log10(v[v > 0]) for v in series.values()]
    ys = np.concatenate(logs) if logs else np.zeros(1)
    if ys.size == 0:
        ys = np.zeros(1)
    lx = np.log10(h)
    x0, x1 = lx.min() - 0.1, lx.max() + 0.1
    y0, y1 = ys.min() - 0.3, ys.max() + 0.3
    if x1 - x0 < 1e-9:
        x0, x1 = x0 - 0.5, x1 + 0.5

    def px(x):
        return _PAD + (x - x0) / (x1 - x0) * (_W - 2 * _PAD)

    def py(y):
        return _H - _PAD - (y - y0) / (y1 - y0) * (_H - 2 * _PAD)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<rect x="{_PAD}" y="{_PAD}" width="{_W - 2 * _PAD}" height="{_H - 2 * _PAD}" fill="none" stroke="black"/>',
    ]
    for t in _ticks(x0, x1):
        if x0 <= t <= x1:
            out.append(f'<line x1="{px(t):.1f}" y1="{_H - _PAD}" x2="{px(t):.1f}" y2="{_H - _PAD + 5}" stroke="black"/>')
            out.append(f'<text x="{px(t):.1f}" y="{_H - _PAD + 18}" font-size="11" text-anchor="middle">1e{t}</text>')
    for t in _ticks(y0, y1):
        if y0 <= t <= y1:
            out.append(f'<line x1="{_PAD - 5}" y1="{py(t):.1f}" x2="{_PAD}" y2="{py(t):.1f}" stroke="black"/>')
            out.append(f'<text x="{_PAD - 8}" y="{py(t) + 4:.1f}" font-size="11" text-anchor="end">1e{t}</text>')
    out.append(f'<text x="{_W / 2}" y="{_H - 15}" font-size="12" text-anchor="middle">h</text>')
    if title:
        out.append(f'<text x="{_W / 2}" y="{_PAD - 20}" font-size="13" text-anchor="middle">{escape(title)}</text>')
    anchor = series["err_u"]
    if anchor.size and anchor[0] > 0:
        ax, ay = lx[0], math.log10(anchor[0])
        for slope in guides:
            bx = lx[-1]
            by = ay + slope * (bx - ax)
            out.append(
                f'<line x1="{px(ax):.1f}" y1="{py(ay):.1f}" x2="{px(bx):.1f}" y2="{py(by):.1f}" '
                f'stroke="grey" stroke-dasharray="5,4"/>'
            )
            out.append(f'<text x="{px(bx) + 4:.1f}" y="{py(by):.1f}" font-size="10" fill="grey">slope {slope}</text>')
    for k, (name, vals) in enumerate(series.items()):
        ok = vals > 0
        pts = " ".join(f"{px(x):.1f},{py(math.log10(y)):.1f}" for x, y in zip(lx[ok], vals[ok]))
        colour = _COLOURS[name]
        out.append(f'<polyline points="{pts}" fill="none" stroke="{colour}" stroke-width="1.5"/>')
        for x, y in zip(lx[ok], vals[ok]):
            out.append(f'<circle cx="{px(x):.1f}" cy="{py(math.log10(y)):.1f}" r="3" fill="{colour}"/>')
        out.append(f'<text x="{_PAD + 10}" y="{_PAD + 16 + 14 * k}" font-size="11" fill="{colour}">{name}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
