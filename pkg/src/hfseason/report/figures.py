"""Static SVG figures drawn with matplotlib.

Figures are built on bare ``Figure`` objects (no pyplot state) with fixed
size, axes placement and explicit limits, and saved with a fixed hash salt
and no date metadata, so identical inputs give byte-identical SVG.
Element ids (``candle-<i>``, ``band``, ``effect``) are stable hooks for
inspecting the output.
"""

from __future__ import annotations

import io
import threading
from datetime import datetime, timezone
from typing import Sequence

import matplotlib
import numpy as np
from matplotlib import dates as mdates
from matplotlib.backends.backend_svg import FigureCanvasSVG
from matplotlib.figure import Figure
from matplotlib.patches import PathPatch
from matplotlib.path import Path as MplPath

from hfseason.errors import DataError
from hfseason.ingest import GridSeries
from hfseason.seasonality import DAY_NAMES, SeasonalProfile
from hfseason.stats import DensityCurve, normal_pdf

FIGSIZE = (8.0, 4.5)
AXES_RECT = (0.10, 0.14, 0.86, 0.76)
SVG_DPI = 72.0

RC = {
    "svg.hashsalt": "hfseason",
    "svg.fonttype": "none",
    "path.simplify": False,
    "font.family": "DejaVu Sans",
    "font.size": 9.0,
    "axes.grid": True,
    "grid.alpha": 0.3,
}
UP_COLOR = "#2e8b57"
DOWN_COLOR = "#c0392b"
PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2",
           "#7f7f7f", "#bcbd22", "#17becf", "#393b79")

CANDLES = "candles"
LINE = "line"
DENSITY = "density"
SEASONAL_DAILY = "seasonal_daily"
SEASONAL_WEEKLY = "seasonal_weekly"
KINDS = (CANDLES, LINE, DENSITY, SEASONAL_DAILY, SEASONAL_WEEKLY)

# rc_context mutates global rcParams, so renders are serialized
_RENDER_LOCK = threading.Lock()


def _new_figure():
    fig = Figure(figsize=FIGSIZE)
    ax = fig.add_axes(AXES_RECT)
    return fig, ax


def _to_svg(fig: Figure) -> str:
    buf = io.BytesIO()
    FigureCanvasSVG(fig)
    fig.savefig(buf, format="svg", metadata={"Date": None, "Creator": "hfseason"})
    return buf.getvalue().decode("utf-8")


def padded_limits(lo: float, hi: float, pad: float = 0.05) -> tuple[float, float]:
    if hi <= lo:
        span = abs(lo) if lo else 1.0
        return lo - 0.5 * span, hi + 0.5 * span
    d = (hi - lo) * pad
    return lo - d, hi + d


def _ms_to_num(ms: np.ndarray) -> np.ndarray:
    return np.asarray(ms, dtype=float) / 86_400_000.0 + mdates.date2num(
        datetime(1970, 1, 1, tzinfo=timezone.utc))


def _candles(ax, series: GridSeries) -> None:
    x = _ms_to_num(series.open_time)
    width = series.interval_ms / 86_400_000.0
    half = 0.35 * width
    for i, (t, o, h, lo, c) in enumerate(zip(x, series.open, series.high, series.low, series.close)):
        mid = t + 0.5 * width
        b0, b1 = min(o, c), max(o, c)
        verts = [(mid - half, b0), (mid + half, b0), (mid + half, b1), (mid - half, b1), (mid - half, b0),
                 (mid, lo), (mid, b0), (mid, b1), (mid, h)]
        codes = [MplPath.MOVETO] + [MplPath.LINETO] * 3 + [MplPath.CLOSEPOLY,
                                                           MplPath.MOVETO, MplPath.LINETO,
                                                           MplPath.MOVETO, MplPath.LINETO]
        color = UP_COLOR if c >= o else DOWN_COLOR
        patch = PathPatch(MplPath(verts, codes), facecolor=color, edgecolor=color, linewidth=0.6)
        patch.set_gid(f"candle-{i}")
        ax.add_patch(patch)
    ax.set_xlim(x[0], x[-1] + width)
    ax.set_ylim(*padded_limits(float(series.low.min()), float(series.high.max())))
    ax.xaxis.set_major_formatter(mdates.DateFormatter("%m-%d %H:%M"))
    ax.set_ylabel("price")
    ax.set_title(f"{series.asset} candles ({series.interval_ms // 60_000} min)")


def _line(ax, data: dict) -> None:
    x = _ms_to_num(data["timestamps"])
    y = np.asarray(data["values"], dtype=float)
    (ln,) = ax.plot(x, y, linewidth=0.5, color=PALETTE[0])
    ln.set_gid("series")
    ax.set_xlim(x[0], x[-1])
    ax.set_ylim(*padded_limits(float(y.min()), float(y.max())))
    ax.xaxis.set_major_formatter(mdates.DateFormatter("%m-%d"))
    ax.set_ylabel(data.get("ylabel", ""))
    ax.set_title(data.get("title", ""))


def _density(ax, data: dict) -> None:
    curves: Sequence[DensityCurve] = data["curves"]
    lo = min(float(c.grid[0]) for c in curves)
    hi = max(float(c.grid[-1]) for c in curves)
    if "xlim" in data:
        lo, hi = data["xlim"]
    mean, sd = curves[0].reference_normal
    xs = np.linspace(lo, hi, 241)
    ref = ax.fill_between(xs, 0.0, normal_pdf(xs, mean, sd), color="#dddddd", linewidth=0,
                          label="normal")
    ref.set_gid("reference-normal")
    top = 0.0
    for i, c in enumerate(curves):
        (ln,) = ax.plot(c.grid, c.density, linewidth=0.9, color=PALETTE[i % len(PALETTE)],
                        label=c.asset or f"series {i + 1}")
        ln.set_gid(f"density-{c.asset or i}")
        mask = (c.grid >= lo) & (c.grid <= hi)
        top = max(top, float(c.density[mask].max()) if mask.any() else 0.0)
    top = max(top, float(normal_pdf(np.array([mean]), mean, sd)[0]))
    ax.set_xlim(lo, hi)
    ax.set_ylim(0.0, 1.05 * top)
    ax.legend(loc="upper right", fontsize=7, ncol=2)
    ax.set_xlabel("log return")
    ax.set_title(data.get("title", "return densities"))


def seasonal_limits(x, lower, upper) -> tuple[tuple[float, float], tuple[float, float]]:
    """Axis limits used for a seasonal curve plot: (xlim, ylim)."""
    x = np.asarray(x, dtype=float)
    return (float(x.min()), float(x.max())), padded_limits(float(np.min(lower)), float(np.max(upper)))


def _seasonal(ax, profile: SeasonalProfile, which: str) -> None:
    curve = profile.daily if which == SEASONAL_DAILY else profile.weekly
    xlim, ylim = seasonal_limits(curve.x, curve.lower, curve.upper)
    band = ax.fill_between(curve.x, curve.lower, curve.upper, color=PALETTE[0], alpha=0.25,
                           linewidth=0)
    band.set_gid("band")
    (ln,) = ax.plot(curve.x, curve.effect, color=PALETTE[0], linewidth=1.2)
    ln.set_gid("effect")
    ax.axhline(0.0, color="#555555", linewidth=0.5)
    ax.set_xlim(*xlim)
    ax.set_ylim(*ylim)
    if which == SEASONAL_WEEKLY:
        ax.set_xticks(np.arange(1, 8))
        ax.set_xticklabels(DAY_NAMES)
        ax.set_xlabel("day of week")
    elif profile.daily_covariate == "time_of_day":
        per_hour = 3_600_000 // profile.interval_ms
        ticks = np.arange(0, len(curve.x) + 1, 3 * per_hour) if per_hour else curve.x
        ax.set_xticks(ticks)
        ax.set_xticklabels([f"{int(t) // per_hour:02d}:00" for t in ticks])
        ax.set_xlabel(f"local time (UTC{profile.tz_offset_minutes / 60:+g}h)")
    else:
        ax.set_xlabel("sample day")
    label = "daily" if which == SEASONAL_DAILY else "weekly"
    ax.set_title(f"{profile.asset} {profile.response_kind}: {label} seasonality")


def render_svg(kind: str, data) -> str:
    """Render one figure to an SVG document.

    ``data`` per kind: ``candles`` a GridSeries; ``line`` a dict with
    ``timestamps`` and ``values``; ``density`` a dict with ``curves``;
    ``seasonal_daily``/``seasonal_weekly`` a SeasonalProfile.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown figure kind {kind!r}")
    if data is None:
        raise DataError("no data to render")
    with _RENDER_LOCK, matplotlib.rc_context(RC):
        fig, ax = _new_figure()
        if kind == CANDLES:
            if len(data) == 0:
                raise DataError("no bars to render")
            _candles(ax, data)
        elif kind == LINE:
            if len(data["values"]) == 0:
                raise DataError("empty series")
            _line(ax, data)
        elif kind == DENSITY:
            if not data.get("curves"):
                raise DataError("no density curves")
            _density(ax, data)
        else:
            curve = data.daily if kind == SEASONAL_DAILY else data.weekly
            if len(curve.x) == 0:
                raise DataError("empty seasonal curve")
            _seasonal(ax, data, kind)
        return _to_svg(fig)


def data_to_svg_coords(x, y, xlim, ylim) -> tuple[np.ndarray, np.ndarray]:
    """Affine map from data to SVG user units for the fixed axes placement."""
    w_pt, h_pt = FIGSIZE[0] * SVG_DPI, FIGSIZE[1] * SVG_DPI
    left, bottom, width, height = AXES_RECT
    px = (left + (np.asarray(x, float) - xlim[0]) / (xlim[1] - xlim[0]) * width) * w_pt
    py = h_pt - (bottom + (np.asarray(y, float) - ylim[0]) / (ylim[1] - ylim[0]) * height) * h_pt
    return px, py
