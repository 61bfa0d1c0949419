"""Minimal static SVG line plots for run reports.

Polyline-based: no plotting dependency. Handles linear and log-10 y axes,
a small color cycle, and a legend. Good enough for solution overlays,
loss curves, and error histories.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = ["line_plot"]

_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def _nice_ticks(lo, hi, target=5):
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
        return [lo]
    span = hi - lo
    raw = span / max(target, 1)
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        step = mult * mag
        if span / step <= target:
            break
    first = math.ceil(lo / step) * step
    ticks = []
    t = first
    while t <= hi + 1e-12 * span:
        ticks.append(0.0 if abs(t) < step * 1e-9 else t)
        t += step
    return ticks


def _fmt(v):
    if v == 0:
        return "0"
    if abs(v) >= 1e4 or abs(v) < 1e-3:
        return f"{v:.1e}"
    return f"{v:.4g}"


def line_plot(path, series, title="", xlabel="", ylabel="", logy=False,
              width=720, height=460):
    """Write an SVG line plot.

    ``series`` is a list of (x, y, label) triples of equal-length arrays.
    With ``logy`` nonpositive values are dropped and the axis shows
    powers of ten.
    """
    ml, mr, mt, mb = 70, 20, 34, 50
    pw, ph = width - ml - mr, height - mt - mb

    cleaned = []
    for x, y, label in series:
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        keep = np.isfinite(x) & np.isfinite(y)
        if logy:
            keep &= y > 0
        x, y = x[keep], y[keep]
        if logy:
            y = np.log10(y)
        if x.size:
            cleaned.append((x, y, label))

    if cleaned:
        xlo = min(float(x.min()) for x, _, _ in cleaned)
        xhi = max(float(x.max()) for x, _, _ in cleaned)
        ylo = min(float(y.min()) for _, y, _ in cleaned)
        yhi = max(float(y.max()) for _, y, _ in cleaned)
    else:
        xlo, xhi, ylo, yhi = 0.0, 1.0, 0.0, 1.0
    if xhi <= xlo:
        xhi = xlo + 1.0
    if yhi <= ylo:
        yhi = ylo + 1.0
    ypad = 0.05 * (yhi - ylo)
    ylo, yhi = ylo - ypad, yhi + ypad

    def sx(v):
        return ml + (v - xlo) / (xhi - xlo) * pw

    def sy(v):
        return mt + ph - (v - ylo) / (yhi - ylo) * ph

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" '
        'stroke="#333" stroke-width="1"/>',
    ]
    if title:
        parts.append(
            f'<text x="{width / 2}" y="20" text-anchor="middle" '
            f'font-family="sans-serif" font-size="14">{title}</text>'
        )

    for t in _nice_ticks(xlo, xhi):
        px = sx(t)
        parts.append(
            f'<line x1="{px:.1f}" y1="{mt + ph}" x2="{px:.1f}" y2="{mt + ph + 4}" stroke="#333"/>'
        )
        parts.append(
            f'<text x="{px:.1f}" y="{mt + ph + 17}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{_fmt(t)}</text>'
        )
    yticks = range(math.ceil(ylo), math.floor(yhi) + 1) if logy else _nice_ticks(ylo, yhi)
    for t in yticks:
        py = sy(t)
        label = f"1e{t}" if logy else _fmt(t)
        parts.append(
            f'<line x1="{ml - 4}" y1="{py:.1f}" x2="{ml}" y2="{py:.1f}" stroke="#333"/>'
        )
        parts.append(
            f'<text x="{ml - 7}" y="{py + 4:.1f}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11">{label}</text>'
        )
    if xlabel:
        parts.append(
            f'<text x="{ml + pw / 2}" y="{height - 12}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="12">{xlabel}</text>'
        )
    if ylabel:
        parts.append(
            f'<text x="16" y="{mt + ph / 2}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="12" '
            f'transform="rotate(-90 16 {mt + ph / 2})">{ylabel}</text>'
        )

    for i, (x, y, label) in enumerate(cleaned):
        color = _PALETTE[i % len(_PALETTE)]
        stride = max(1, x.size // 4000)  # cap polyline size
        pts = " ".join(
            f"{sx(xv):.1f},{sy(yv):.1f}" for xv, yv in zip(x[::stride], y[::stride])
        )
        parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.4"/>'
        )
        if label:
            ly = mt + 16 + 16 * i
            lx = ml + pw - 150
            parts.append(
                f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 22}" y2="{ly - 4}" '
                f'stroke="{color}" stroke-width="2"/>'
            )
            parts.append(
                f'<text x="{lx + 28}" y="{ly}" font-family="sans-serif" '
                f'font-size="11">{label}</text>'
            )

    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")
    return path
