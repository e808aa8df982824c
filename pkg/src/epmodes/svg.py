"""Minimal static SVG line plots: no rendering dependency, diffable output."""

from __future__ import annotations

import numpy as np

__all__ = ["line_panel", "render_panels"]

_WIDTH, _HEIGHT = 640, 360
_MARGIN_L, _MARGIN_R, _MARGIN_T, _MARGIN_B = 64, 16, 28, 44
_COLORS = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
    "#8c564b", "#e377c2", "#17becf", "#bcbd22", "#7f7f7f",
]


def _limits(values: np.ndarray) -> tuple[float, float]:
    finite = values[np.isfinite(values)]
    if finite.size == 0:
        return -1.0, 1.0
    lo, hi = float(finite.min()), float(finite.max())
    if hi - lo < 1e-300:
        pad = max(abs(hi), 1.0) * 0.05
        return lo - pad, hi + pad
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def _ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    return [lo + (hi - lo) * k / (count - 1) for k in range(count)]


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def line_panel(x, series: dict[str, np.ndarray], xlabel: str, ylabel: str) -> str:
    """One SVG panel with a polyline per named series."""
    x = np.asarray(x, dtype=float)
    if x.size == 0 or not series:
        raise ValueError("nothing to plot")
    all_y = np.concatenate([np.asarray(v, dtype=float) for v in series.values()])
    xlo, xhi = _limits(x)
    ylo, yhi = _limits(all_y)
    plot_w = _WIDTH - _MARGIN_L - _MARGIN_R
    plot_h = _HEIGHT - _MARGIN_T - _MARGIN_B

    def sx(v):
        return _MARGIN_L + (v - xlo) / (xhi - xlo) * plot_w

    def sy(v):
        return _MARGIN_T + plot_h - (v - ylo) / (yhi - ylo) * plot_h

    parts = [
        f'<rect x="{_MARGIN_L}" y="{_MARGIN_T}" width="{plot_w}" height="{plot_h}" '
        'fill="none" stroke="#333333" stroke-width="1"/>'
    ]
    for tick in _ticks(xlo, xhi):
        px = sx(tick)
        parts.append(
            f'<line x1="{px:.2f}" y1="{_MARGIN_T + plot_h}" x2="{px:.2f}" '
            f'y2="{_MARGIN_T + plot_h + 5}" stroke="#333333"/>'
        )
        parts.append(
            f'<text x="{px:.2f}" y="{_MARGIN_T + plot_h + 18}" font-size="11" '
            f'text-anchor="middle">{_fmt(tick)}</text>'
        )
    for tick in _ticks(ylo, yhi):
        py = sy(tick)
        parts.append(
            f'<line x1="{_MARGIN_L - 5}" y1="{py:.2f}" x2="{_MARGIN_L}" y2="{py:.2f}" stroke="#333333"/>'
        )
        parts.append(
            f'<text x="{_MARGIN_L - 8}" y="{py + 4:.2f}" font-size="11" '
            f'text-anchor="end">{_fmt(tick)}</text>'
        )
    parts.append(
        f'<text x="{_MARGIN_L + plot_w / 2:.2f}" y="{_HEIGHT - 8}" font-size="13" '
        f'text-anchor="middle">{xlabel}</text>'
    )
    parts.append(
        f'<text x="16" y="{_MARGIN_T + plot_h / 2:.2f}" font-size="13" text-anchor="middle" '
        f'transform="rotate(-90 16 {_MARGIN_T + plot_h / 2:.2f})">{ylabel}</text>'
    )
    for idx, (name, y) in enumerate(series.items()):
        y = np.asarray(y, dtype=float)
        pts = []
        for xv, yv in zip(x, y):
            if np.isfinite(xv) and np.isfinite(yv):
                pts.append(f"{sx(xv):.2f},{sy(yv):.2f}")
        if not pts:
            continue
        color = _COLORS[idx % len(_COLORS)]
        parts.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="1.2" '
            f'points="{" ".join(pts)}"><title>{name}</title></polyline>'
        )
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" height="{_HEIGHT}" '
        f'viewBox="0 0 {_WIDTH} {_HEIGHT}">' + "".join(parts) + "</svg>"
    )


def render_panels(panels: list[str]) -> str:
    """Stack panels vertically into one SVG document."""
    if not panels:
        raise ValueError("no panels to render")
    total_h = _HEIGHT * len(panels)
    body = []
    for i, panel in enumerate(panels):
        body.append(f'<g transform="translate(0 {i * _HEIGHT})">{panel}</g>')
    return (
        '<?xml version="1.0" encoding="UTF-8"?>\n'
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" height="{total_h}" '
        f'viewBox="0 0 {_WIDTH} {total_h}">' + "".join(body) + "</svg>\n"
    )
