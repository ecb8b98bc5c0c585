"""Minimal self-contained SVG line plots (no plotting dependency).

Output contains no timestamps, so identical data yields identical bytes.
"""

from __future__ import annotations

import numpy as np

_W, _H = 800, 480
_ML, _MR, _MT, _MB = 70, 20, 20, 50


def _scale(vals, lo, hi, out_lo, out_hi):
    span = hi - lo if hi > lo else 1.0
    return out_lo + (np.asarray(vals) - lo) * (out_hi - out_lo) / span


def _polyline(xs, ys, color, width=1.0):
    pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))
    return (f'<polyline fill="none" stroke="{color}" '
            f'stroke-width="{width}" points="{pts}"/>')


def _ticks(lo, hi, n=6):
    raw = np.linspace(lo, hi, n)
    return [float(f"{v:.3g}") for v in raw]


def render_fringe_svg(path, delta_t, values, fit_values=None,
                      x_label="delay (ns)", y_label="normalized coincidences"):
    """Fringe data (thin line) with an optional fit overlay (thick line)."""
    x = np.asarray(delta_t) * 1e9
    y = np.asarray(values)
    y_all = y if fit_values is None else np.concatenate([y, fit_values])
    x_lo, x_hi = float(x.min()), float(x.max())
    y_lo = float(y_all.min()) - 0.05
    y_hi = float(y_all.max()) + 0.05

    px = _scale(x, x_lo, x_hi, _ML, _W - _MR)
    py = _scale(y, y_lo, y_hi, _H - _MB, _MT)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<rect x="{_ML}" y="{_MT}" width="{_W - _ML - _MR}" '
        f'height="{_H - _MT - _MB}" fill="none" stroke="black"/>',
    ]
    for tx in _ticks(x_lo, x_hi):
        sx = float(_scale(tx, x_lo, x_hi, _ML, _W - _MR))
        parts.append(f'<line x1="{sx:.2f}" y1="{_H - _MB}" x2="{sx:.2f}" '
                     f'y2="{_H - _MB + 5}" stroke="black"/>')
        parts.append(f'<text x="{sx:.2f}" y="{_H - _MB + 20}" font-size="12" '
                     f'text-anchor="middle">{tx:g}</text>')
    for ty in _ticks(y_lo, y_hi):
        sy = float(_scale(ty, y_lo, y_hi, _H - _MB, _MT))
        parts.append(f'<line x1="{_ML - 5}" y1="{sy:.2f}" x2="{_ML}" '
                     f'y2="{sy:.2f}" stroke="black"/>')
        parts.append(f'<text x="{_ML - 8}" y="{sy + 4:.2f}" font-size="12" '
                     f'text-anchor="end">{ty:g}</text>')
    parts.append(f'<text x="{(_ML + _W - _MR) / 2}" y="{_H - 12}" '
                 f'font-size="14" text-anchor="middle">{x_label}</text>')
    parts.append(f'<text x="16" y="{(_MT + _H - _MB) / 2}" font-size="14" '
                 f'text-anchor="middle" transform="rotate(-90 16 '
                 f'{(_MT + _H - _MB) / 2})">{y_label}</text>')
    parts.append(_polyline(px, py, "#777777", 0.8))
    if fit_values is not None:
        pf = _scale(np.asarray(fit_values), y_lo, y_hi, _H - _MB, _MT)
        parts.append(_polyline(px, pf, "#cc3311", 1.8))
    parts.append("</svg>")
    with open(path, "w") as f:
        f.write("\n".join(parts))
        f.write("\n")
