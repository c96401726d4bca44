"""Opinion-versus-time plots written as standalone SVG."""
from __future__ import annotations

import numpy as np

WIDTH, HEIGHT = 640, 400
MARGIN = 50
PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
           "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")


def _fmt(v):
    return f"{v:.2f}"


def _decimate(times, values, max_points):
    if len(times) <= max_points:
        return times, values
    idx = np.unique(np.linspace(0, len(times) - 1, max_points).round().astype(int))
    return times[idx], values[idx]


def _ticks(lo, hi, count=5):
    if hi == lo:
        return [lo]
    return list(np.linspace(lo, hi, count))


def render(times, values, events=(), title="", max_points=2000) -> str:
    """SVG text with one polyline per agent; switch events drawn as ticks on the time axis."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.shape[0] < 2:
        raise ValueError("need at least two samples to plot")
    t_lo, t_hi = float(times[0]), float(times[-1])
    x_lo, x_hi = float(values.min()), float(values.max())
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
    pad = 0.03 * (x_hi - x_lo)
    x_lo, x_hi = x_lo - pad, x_hi + pad
    pw, ph = WIDTH - 2 * MARGIN, HEIGHT - 2 * MARGIN

    def sx(t):
        return MARGIN + (t - t_lo) / (t_hi - t_lo) * pw

    def sy(x):
        return MARGIN + (x_hi - x) / (x_hi - x_lo) * ph

    ts, vs = _decimate(times, values, max_points)
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<rect x="{MARGIN}" y="{MARGIN}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    if title:
        out.append(f'<text x="{WIDTH / 2:.2f}" y="{MARGIN / 2:.2f}" text-anchor="middle">{title}</text>')
    for t in _ticks(t_lo, t_hi):
        out.append(f'<text x="{_fmt(sx(t))}" y="{HEIGHT - MARGIN + 16}" text-anchor="middle">{t:.3g}</text>')
    for x in _ticks(x_lo + pad, x_hi - pad):
        out.append(f'<text x="{MARGIN - 6}" y="{_fmt(sy(x) + 4)}" text-anchor="end">{x:.3g}</text>')
    out.append(f'<text x="{WIDTH / 2:.2f}" y="{HEIGHT - 12}" text-anchor="middle">t</text>')
    out.append(f'<text x="14" y="{HEIGHT / 2:.2f}" text-anchor="middle">x</text>')
    for t_ev in sorted({float(t) for t in events}):
        px = _fmt(sx(t_ev))
        out.append(f'<line class="event" x1="{px}" y1="{HEIGHT - MARGIN}" x2="{px}" '
                   f'y2="{HEIGHT - MARGIN - 6}" stroke="#999" stroke-width="0.8"/>')
    for i in range(vs.shape[1]):
        pts = " ".join(f"{_fmt(sx(t))},{_fmt(sy(x))}" for t, x in zip(ts, vs[:, i]))
        color = PALETTE[i % len(PALETTE)]
        out.append(f'<polyline class="agent" data-agent="{i + 1}" fill="none" stroke="{color}" '
                   f'stroke-width="1" points="{pts}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
