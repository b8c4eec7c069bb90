"""Minimal deterministic SVG line plots for result tables.

A plot is a pure function of the table and the plot spec: same inputs, same
bytes.  Only what the experiment reports need is implemented: line/scatter
series over a shared x column, optionally log-scaled axes, a legend and
tick labels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import UsageError

_WIDTH, _HEIGHT = 800, 500
_MARGIN_L, _MARGIN_R, _MARGIN_T, _MARGIN_B = 70, 30, 40, 55
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


@dataclass(frozen=True)
class PlotSpec:
    title: str
    x: str
    y: tuple
    logx: bool = False
    logy: bool = False


def parse_table_csv(text: str) -> dict:
    """Columns of a result CSV as lists; comment lines are skipped."""
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    if len(lines) < 2:
        raise UsageError("table has no data rows")
    header = lines[0].split(",")
    cols = {h: [] for h in header}
    for ln in lines[1:]:
        for h, cell in zip(header, ln.split(",")):
            cols[h].append(cell)
    return cols


def _to_float(values):
    out = []
    for v in values:
        try:
            out.append(float(v))
        except ValueError:
            out.append(math.nan)
    return out


def _scale(value, lo, hi, log):
    if log:
        value, lo, hi = math.log10(value), math.log10(lo), math.log10(hi)
    if hi == lo:
        return 0.5
    return (value - lo) / (hi - lo)


def _ticks(lo, hi, log):
    if log:
        lo_e = math.floor(math.log10(lo))
        hi_e = math.ceil(math.log10(hi))
        return [10.0**e for e in range(lo_e, hi_e + 1) if lo <= 10.0**e <= hi] or [lo, hi]
    span = hi - lo
    if span <= 0:
        return [lo]
    step = 10.0 ** math.floor(math.log10(span / 4))
    for mult in (1, 2, 5, 10):
        if span / (step * mult) <= 6:
            step *= mult
            break
    first = math.ceil(lo / step) * step
    ticks, v = [], first
    while v <= hi + 1e-12:
        ticks.append(round(v, 12))
        v += step
    return ticks or [lo, hi]


def _fmt(v):
    if v == 0:
        return "0"
    if abs(v) >= 1000 or abs(v) < 0.01:
        return f"{v:.1e}"
    return f"{v:g}"


def render_line_plot(columns: dict, spec: PlotSpec) -> str:
    """Render series ``spec.y`` against ``spec.x`` as an SVG document."""
    if spec.x not in columns:
        raise UsageError(f"missing x column {spec.x!r}")
    for y in spec.y:
        if y not in columns:
            raise UsageError(f"missing y column {y!r}")
    xs = _to_float(columns[spec.x])
    series = {y: _to_float(columns[y]) for y in spec.y}
    points = {
        y: [(x, v) for x, v in zip(xs, vals) if not (math.isnan(x) or math.isnan(v))]
        for y, vals in series.items()
    }
    all_pts = [p for pts in points.values() for p in pts]
    if not all_pts:
        raise UsageError("no finite data points to plot")
    if spec.logx and any(x <= 0 for x, _ in all_pts):
        raise UsageError("log x axis needs positive x values")
    if spec.logy and any(v <= 0 for _, v in all_pts):
        raise UsageError("log y axis needs positive y values")
    x_lo, x_hi = min(x for x, _ in all_pts), max(x for x, _ in all_pts)
    y_lo, y_hi = min(v for _, v in all_pts), max(v for _, v in all_pts)
    if not spec.logy:
        pad = 0.05 * (y_hi - y_lo or 1.0)
        y_lo, y_hi = y_lo - pad, y_hi + pad

    plot_w = _WIDTH - _MARGIN_L - _MARGIN_R
    plot_h = _HEIGHT - _MARGIN_T - _MARGIN_B

    def px(x):
        return _MARGIN_L + plot_w * _scale(x, x_lo, x_hi, spec.logx)

    def py(v):
        return _MARGIN_T + plot_h * (1.0 - _scale(v, y_lo, y_hi, spec.logy))

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" height="{_HEIGHT}" '
        f'viewBox="0 0 {_WIDTH} {_HEIGHT}">',
        f'<rect width="{_WIDTH}" height="{_HEIGHT}" fill="white"/>',
        f'<text x="{_WIDTH / 2:.1f}" y="24" text-anchor="middle" '
        f'font-family="sans-serif" font-size="16">{spec.title}</text>',
        f'<rect x="{_MARGIN_L}" y="{_MARGIN_T}" width="{plot_w}" height="{plot_h}" '
        f'fill="none" stroke="#333"/>',
    ]
    for tx in _ticks(x_lo, x_hi, spec.logx):
        x = px(tx)
        parts.append(
            f'<line x1="{x:.1f}" y1="{_MARGIN_T + plot_h}" x2="{x:.1f}" '
            f'y2="{_MARGIN_T + plot_h + 5}" stroke="#333"/>'
        )
        parts.append(
            f'<text x="{x:.1f}" y="{_MARGIN_T + plot_h + 20}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{_fmt(tx)}</text>'
        )
    for ty in _ticks(y_lo, y_hi, spec.logy):
        y = py(ty)
        parts.append(
            f'<line x1="{_MARGIN_L - 5}" y1="{y:.1f}" x2="{_MARGIN_L}" '
            f'y2="{y:.1f}" stroke="#333"/>'
        )
        parts.append(
            f'<text x="{_MARGIN_L - 9}" y="{y + 4:.1f}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11">{_fmt(ty)}</text>'
        )
    parts.append(
        f'<text x="{_MARGIN_L + plot_w / 2:.1f}" y="{_HEIGHT - 12}" '
        f'text-anchor="middle" font-family="sans-serif" font-size="13">{spec.x}'
        f'{" (log)" if spec.logx else ""}</text>'
    )
    for k, (name, pts) in enumerate(points.items()):
        color = _COLORS[k % len(_COLORS)]
        pts = sorted(pts)
        path = " ".join(f"{px(x):.1f},{py(v):.1f}" for x, v in pts)
        parts.append(
            f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="2"/>'
        )
        for x, v in pts:
            parts.append(
                f'<circle cx="{px(x):.1f}" cy="{py(v):.1f}" r="3" fill="{color}"/>'
            )
        ly = _MARGIN_T + 16 + 18 * k
        parts.append(
            f'<line x1="{_MARGIN_L + 10}" y1="{ly - 4}" x2="{_MARGIN_L + 34}" '
            f'y2="{ly - 4}" stroke="{color}" stroke-width="2"/>'
        )
        parts.append(
            f'<text x="{_MARGIN_L + 40}" y="{ly}" font-family="sans-serif" '
            f'font-size="12">{name}{" (log)" if spec.logy else ""}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
