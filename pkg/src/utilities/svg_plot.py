"""
 Copyright Duel 2025
"""
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple
from xml.sax.saxutils import escape

import numpy as np

logger = logging.getLogger(__name__)

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


@dataclass
class Series:
    """
    One line of a plot with an optional confidence band.
    """
    label: str
    x: Sequence[float]
    y: Sequence[float]
    lower: Optional[Sequence[float]] = None
    upper: Optional[Sequence[float]] = None


@dataclass
class LinePlot:
    title: str
    x_label: str
    y_label: str
    log_x: bool = False
    y_range: Optional[Tuple[float, float]] = None
    width: int = 640
    height: int = 420
    series: List[Series] = field(default_factory=list)
    notes: List[str] = field(default_factory=list)

    def add(self, series: Series) -> "LinePlot":
        self.series.append(series)
        return self


class SvgPlot:
    """
     A utilities class rendering line plots with confidence bands as standalone SVG
    """

    MARGIN_LEFT = 64
    MARGIN_RIGHT = 150
    MARGIN_TOP = 36
    MARGIN_BOTTOM = 52

    @staticmethod
    def _finite(values) -> np.ndarray:
        values = np.asarray(values, dtype=np.float64)
        return values[np.isfinite(values)]

    @staticmethod
    def _ticks(low: float, high: float, count: int = 5) -> List[float]:
        if high <= low:
            return [low]
        step = (high - low) / count
        magnitude = 10 ** math.floor(math.log10(step))
        step = min((m * magnitude for m in (1, 2, 2.5, 5, 10) if m * magnitude >= step), default=step)
        start = math.ceil(low / step) * step
        ticks = []
        value = start
        while value <= high + 1e-12:
            ticks.append(round(value, 10))
            value += step
        return ticks

    @staticmethod
    def _format(value: float) -> str:
        if value != 0 and (abs(value) >= 1e4 or abs(value) < 1e-2):
            return f"{value:.0e}"
        return f"{value:g}"

    @staticmethod
    def render(plot: LinePlot) -> str:
        """
        Render a plot. Non-finite points are dropped; bands are drawn under their lines.
        :param plot: The plot description.
        :return: SVG document text.
        """
        left, top = SvgPlot.MARGIN_LEFT, SvgPlot.MARGIN_TOP
        inner_w = plot.width - left - SvgPlot.MARGIN_RIGHT
        inner_h = plot.height - top - SvgPlot.MARGIN_BOTTOM

        xs = np.concatenate([SvgPlot._finite(s.x) for s in plot.series]) if plot.series else np.array([1.0])
        if plot.log_x:
            xs = xs[xs > 0]
        ys = np.concatenate([SvgPlot._finite(v) for s in plot.series for v in (s.y, s.lower, s.upper)
                             if v is not None]) if plot.series else np.array([0.0])
        xs = xs if xs.size else np.array([1.0])
        ys = ys if ys.size else np.array([0.0])

        tx = np.log10 if plot.log_x else (lambda v: np.asarray(v, dtype=np.float64))
        x_lo, x_hi = float(np.min(tx(xs))), float(np.max(tx(xs)))
        if x_hi == x_lo:
            x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
        y_lo, y_hi = plot.y_range if plot.y_range else (float(ys.min()), float(ys.max()))
        if y_hi == y_lo:
            y_lo, y_hi = y_lo - 0.5, y_hi + 0.5

        def px(value):
            return left + (float(tx(value)) - x_lo) / (x_hi - x_lo) * inner_w

        def py(value):
            clipped = min(max(float(value), y_lo), y_hi)
            return top + inner_h - (clipped - y_lo) / (y_hi - y_lo) * inner_h

        out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{plot.width}" height="{plot.height}" '
               f'viewBox="0 0 {plot.width} {plot.height}" font-family="sans-serif" font-size="11">',
               f'<rect width="{plot.width}" height="{plot.height}" fill="white"/>',
               f'<text x="{plot.width / 2:.1f}" y="20" text-anchor="middle" font-size="14">{escape(plot.title)}</text>']

        # axes and grid
        out.append(f'<rect x="{left}" y="{top}" width="{inner_w}" height="{inner_h}" fill="none" stroke="black"/>')
        for tick in SvgPlot._ticks(y_lo, y_hi):
            y = py(tick)
            out.append(f'<line x1="{left}" y1="{y:.1f}" x2="{left + inner_w}" y2="{y:.1f}" stroke="#ddd"/>')
            out.append(f'<text x="{left - 6}" y="{y + 4:.1f}" text-anchor="end">{SvgPlot._format(tick)}</text>')
        if plot.log_x:
            x_ticks = [10.0 ** e for e in range(math.floor(x_lo), math.ceil(x_hi) + 1) if x_lo <= e <= x_hi]
            x_ticks = x_ticks or sorted(set(float(x) for x in xs))
        else:
            x_ticks = SvgPlot._ticks(x_lo, x_hi)
        for tick in x_ticks:
            x = px(tick)
            out.append(f'<line x1="{x:.1f}" y1="{top}" x2="{x:.1f}" y2="{top + inner_h}" stroke="#eee"/>')
            out.append(f'<text x="{x:.1f}" y="{top + inner_h + 16}" text-anchor="middle">'
                       f'{SvgPlot._format(tick)}</text>')
        out.append(f'<text x="{left + inner_w / 2:.1f}" y="{plot.height - 12}" text-anchor="middle">'
                   f'{escape(plot.x_label)}</text>')
        out.append(f'<text x="16" y="{top + inner_h / 2:.1f}" text-anchor="middle" '
                   f'transform="rotate(-90 16 {top + inner_h / 2:.1f})">{escape(plot.y_label)}</text>')

        for index, series in enumerate(plot.series):
            colour = PALETTE[index % len(PALETTE)]
            points = [(x, y) for x, y in zip(series.x, series.y)
                      if np.isfinite(x) and np.isfinite(y) and (x > 0 or not plot.log_x)]
            if series.lower is not None and series.upper is not None:
                band = [(x, lo, hi) for x, lo, hi in zip(series.x, series.lower, series.upper)
                        if np.isfinite(lo) and np.isfinite(hi) and (x > 0 or not plot.log_x)]
                if band:
                    outline = [f"{px(x):.1f},{py(hi):.1f}" for x, _, hi in band]
                    outline += [f"{px(x):.1f},{py(lo):.1f}" for x, lo, _ in reversed(band)]
                    out.append(f'<polygon points="{" ".join(outline)}" fill="{colour}" fill-opacity="0.18" '
                               f'stroke="none"/>')
            if points:
                path = " ".join(f"{px(x):.1f},{py(y):.1f}" for x, y in points)
                out.append(f'<polyline points="{path}" fill="none" stroke="{colour}" stroke-width="2"/>')
                for x, y in points:
                    out.append(f'<circle cx="{px(x):.1f}" cy="{py(y):.1f}" r="2.5" fill="{colour}"/>')
            legend_y = top + 14 + 18 * index
            legend_x = left + inner_w + 12
            out.append(f'<line x1="{legend_x}" y1="{legend_y - 4}" x2="{legend_x + 18}" y2="{legend_y - 4}" '
                       f'stroke="{colour}" stroke-width="2"/>')
            out.append(f'<text x="{legend_x + 24}" y="{legend_y}">{escape(series.label)}</text>')

        for index, note in enumerate(plot.notes):
            out.append(f'<text x="{left + inner_w + 12}" y="{top + inner_h - 14 * (len(plot.notes) - 1 - index)}" '
                       f'font-size="9" fill="#555">{escape(note)}</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"
