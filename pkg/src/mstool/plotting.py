"""Deterministic SVG renderings of GFP traces and segmentations.

SVG is written by hand with fixed-precision coordinates so the same inputs
always produce the same bytes; no raster or plotting library is involved.
"""

from __future__ import annotations

import numpy as np

from .backfit import LabelSequence
from .errors import ValidationError
from .microstate import GfpSeries

WIDTH = 800
HEIGHT = 300
MARGIN = 45

STATE_COLORS = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")


def _window_indices(series: GfpSeries, start_s: float | None,
                    end_s: float | None) -> tuple[int, int]:
    n = len(series)
    rate = series.sampling_rate_hz
    start_s = 0.0 if start_s is None else start_s
    end_s = n / rate if end_s is None else end_s
    lo = int(round(start_s * rate))
    hi = int(round(end_s * rate))
    if lo < 0 or hi > n or lo >= hi:
        raise ValidationError(
            f"window [{start_s}, {end_s}] s is outside the {n / rate:.6g} s recording"
        )
    return lo, hi


def _scales(values: np.ndarray, lo: int, hi: int):
    window = values[lo:hi]
    ymax = float(window.max())
    if ymax <= 0.0:
        ymax = 1.0
    span_x = (WIDTH - 2 * MARGIN) / max(hi - lo - 1, 1)
    span_y = (HEIGHT - 2 * MARGIN) / ymax

    def x_of(t: int) -> float:
        return MARGIN + (t - lo) * span_x

    def y_of(v: float) -> float:
        return HEIGHT - MARGIN - v * span_y

    return x_of, y_of


def _polyline(values: np.ndarray, lo: int, hi: int, x_of, y_of) -> str:
    pts = " ".join(f"{x_of(t):.3f},{y_of(values[t]):.3f}" for t in range(lo, hi))
    return (f'<polyline fill="none" stroke="#222222" stroke-width="1.2" '
            f'points="{pts}"/>')


def _header(title: str) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>',
        f'<text x="{MARGIN}" y="20" font-family="sans-serif" font-size="13">{title}</text>',
    ]


def render_gfp_svg(series: GfpSeries, peaks: np.ndarray,
                   start_s: float | None = None, end_s: float | None = None,
                   title: str = "GFP") -> str:
    """GFP trace over a window with circle markers at peak samples."""
    lo, hi = _window_indices(series, start_s, end_s)
    x_of, y_of = _scales(series.values, lo, hi)
    parts = _header(title)
    parts.append(_polyline(series.values, lo, hi, x_of, y_of))
    for p in peaks:
        if lo <= p < hi:
            parts.append(
                f'<circle cx="{x_of(int(p)):.3f}" cy="{y_of(series.values[p]):.3f}" '
                f'r="3" fill="#d62728"/>'
            )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def render_segmentation_svg(series: GfpSeries, seq: LabelSequence,
                            state_labels: list[str],
                            start_s: float | None = None,
                            end_s: float | None = None,
                            title: str = "Microstate segmentation") -> str:
    """GFP trace over a per-sample state-colored background fill."""
    if len(seq) != len(series):
        raise ValidationError("label sequence and GFP series lengths differ")
    lo, hi = _window_indices(series, start_s, end_s)
    x_of, y_of = _scales(series.values, lo, hi)
    parts = _header(title)

    baseline = HEIGHT - MARGIN
    t = lo
    while t < hi:
        run_end = t
        while run_end < hi and seq.labels[run_end] == seq.labels[t]:
            run_end += 1
        color = STATE_COLORS[seq.labels[t] % len(STATE_COLORS)]
        x0 = x_of(t)
        x1 = x_of(run_end - 1) + (x_of(min(run_end, hi - 1)) - x_of(run_end - 1))
        parts.append(
            f'<rect x="{x0:.3f}" y="{MARGIN}" width="{max(x1 - x0, 0.5):.3f}" '
            f'height="{baseline - MARGIN}" fill="{color}" fill-opacity="0.35"/>'
        )
        t = run_end

    parts.append(_polyline(series.values, lo, hi, x_of, y_of))
    for i, lbl in enumerate(state_labels):
        x = MARGIN + i * 60
        color = STATE_COLORS[i % len(STATE_COLORS)]
        parts.append(f'<rect x="{x}" y="{HEIGHT - 22}" width="12" height="12" '
                     f'fill="{color}" fill-opacity="0.7"/>')
        parts.append(f'<text x="{x + 16}" y="{HEIGHT - 11}" font-family="sans-serif" '
                     f'font-size="12">{lbl}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
