"""Static two-panel SVG of fitted times and rates per count index."""

from typing import Sequence
from xml.sax.saxutils import escape

PANEL_W, PANEL_H = 360, 260
MARGIN = 48


def _fmt(v: float) -> str:
    return f"{v:.3f}"


def _panel(panel_id: str, title: str, ylabel: str, ks: Sequence[int], ys: Sequence[float], x0: float) -> str:
    lo, hi = min(ys), max(ys)
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    kmin, kmax = min(ks), max(ks)
    kspan = max(kmax - kmin, 1)
    plot_w = PANEL_W - 2 * MARGIN
    plot_h = PANEL_H - 2 * MARGIN

    def px(k):
        return x0 + MARGIN + (k - kmin) / kspan * plot_w

    def py(y):
        return MARGIN + (1.0 - (y - lo) / (hi - lo)) * plot_h

    pts = " ".join(f"{_fmt(px(k))},{_fmt(py(y))}" for k, y in zip(ks, ys))
    left, right = x0 + MARGIN, x0 + MARGIN + plot_w
    top, bottom = MARGIN, MARGIN + plot_h
    parts = [
        f'<g id="{panel_id}" class="panel">',
        f'<text x="{_fmt(x0 + PANEL_W / 2)}" y="{MARGIN / 2:.3f}" text-anchor="middle">{escape(title)}</text>',
        f'<line x1="{_fmt(left)}" y1="{_fmt(bottom)}" x2="{_fmt(right)}" y2="{_fmt(bottom)}" stroke="black"/>',
        f'<line x1="{_fmt(left)}" y1="{_fmt(top)}" x2="{_fmt(left)}" y2="{_fmt(bottom)}" stroke="black"/>',
        f'<text x="{_fmt((left + right) / 2)}" y="{_fmt(bottom + 32)}" text-anchor="middle">k</text>',
        f'<text x="{_fmt(left - 8)}" y="{_fmt(top - 8)}" text-anchor="end">{escape(ylabel)}</text>',
        f'<text x="{_fmt(left - 4)}" y="{_fmt(top + 4)}" text-anchor="end" font-size="10">{hi:.4g}</text>',
        f'<text x="{_fmt(left - 4)}" y="{_fmt(bottom)}" text-anchor="end" font-size="10">{lo:.4g}</text>',
        f'<text x="{_fmt(left)}" y="{_fmt(bottom + 14)}" text-anchor="middle" font-size="10">{kmin}</text>',
        f'<text x="{_fmt(right)}" y="{_fmt(bottom + 14)}" text-anchor="middle" font-size="10">{kmax}</text>',
        f'<polyline points="{pts}" fill="none" stroke="steelblue"/>',
    ]
    for k, y in zip(ks, ys):
        parts.append(f'<circle cx="{_fmt(px(k))}" cy="{_fmt(py(y))}" r="3" fill="steelblue"/>')
    parts.append("</g>")
    return "\n".join(parts)


def two_panel_svg(times: Sequence[float], lambdas: Sequence[float]) -> str:
    """Left panel ``t_k`` against ``k``, right panel ``lambda_k`` against ``k``."""
    ks = list(range(1, len(times) + 1))
    body = [
        _panel("time-values", "time values", "t_k", ks, [float(t) for t in times], 0.0),
        _panel("lambda-values", "lambda values", "lambda_k", ks, [float(v) for v in lambdas], PANEL_W),
    ]
    return (
        '<?xml version="1.0" encoding="UTF-8"?>\n'
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{2 * PANEL_W}" height="{PANEL_H}" '
        f'viewBox="0 0 {2 * PANEL_W} {PANEL_H}" font-family="sans-serif" font-size="12">\n'
        + "\n".join(body)
        + "\n</svg>\n"
    )
