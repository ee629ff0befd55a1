"""Returns, absolute-return volatility and OHLCV re-aggregation on grid series."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from datetime import timedelta

import numpy as np

from hfseason.errors import DataError
from hfseason.ingest import GridSeries, _check_interval, _group_sorted, format_timestamp, parse_interval


def _closes(series: GridSeries | np.ndarray) -> np.ndarray:
    close = np.asarray(series.close if isinstance(series, GridSeries) else series, dtype=float)
    if close.ndim != 1 or len(close) < 2:
        raise DataError("at least two bars are required to form returns")
    if np.any(~np.isfinite(close)) or np.any(close <= 0):
        raise DataError("close prices must be finite and positive")
    return close


def simple_returns(series: GridSeries | np.ndarray) -> np.ndarray:
    """Close-to-close simple returns ``(P_t - P_{t-1}) / P_{t-1}``."""
    close = _closes(series)
    return (close[1:] - close[:-1]) / close[:-1]


def log_returns(series: GridSeries | np.ndarray) -> np.ndarray:
    """Close-to-close log returns ``ln(P_t / P_{t-1})``."""
    close = _closes(series)
    return np.log(close[1:] / close[:-1])


def abs_volatility(log_rets: np.ndarray) -> np.ndarray:
    return np.abs(np.asarray(log_rets, dtype=float))


@dataclass
class ReturnSeries:
    """Returns stamped with the open time of the later bar of each pair.

    ``gap_filled[i]`` is true when the later bar was forward-filled, i.e. the
    return is a structural zero rather than an observed one.
    """

    asset: str
    interval_ms: int
    timestamps: np.ndarray
    simple: np.ndarray
    log: np.ndarray
    abs_log: np.ndarray
    gap_filled: np.ndarray

    def __len__(self) -> int:
        return len(self.timestamps)

    @property
    def interval(self) -> timedelta:
        return timedelta(milliseconds=self.interval_ms)

    @classmethod
    def from_grid(cls, series: GridSeries) -> "ReturnSeries":
        simple = simple_returns(series)
        log = log_returns(series)
        out = cls(series.asset, series.interval_ms, series.open_time[1:].copy(), simple, log,
                  abs_volatility(log), series.gap_filled[1:].copy())
        # under the drop policy, a pair straddling a hole is not a one-interval return
        adjacent = np.diff(series.open_time) == series.interval_ms
        return out if adjacent.all() else out._subset(adjacent)

    def _subset(self, keep: np.ndarray) -> "ReturnSeries":
        return ReturnSeries(self.asset, self.interval_ms, self.timestamps[keep], self.simple[keep],
                            self.log[keep], self.abs_log[keep], self.gap_filled[keep])

    def observed(self) -> "ReturnSeries":
        """Drop returns ending on forward-filled bars."""
        return self._subset(~self.gap_filled)

    def at(self, timestamps) -> "ReturnSeries":
        """Subset to the returns stamped at any of ``timestamps``."""
        keep = np.isin(self.timestamps, timestamps)
        return self._subset(keep)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["timestamp", "simple", "log", "abs_log"])
        for t, s, lg, a in zip(self.timestamps, self.simple, self.log, self.abs_log):
            w.writerow([format_timestamp(int(t)), repr(float(s)), repr(float(lg)), repr(float(a))])
        return buf.getvalue()


def aggregate_bars(series: GridSeries, target_interval: str | int | timedelta) -> GridSeries:
    """Merge bars into coarser buckets aligned to midnight UTC.

    Open is the first open, high the max high, low the min low, close the
    last close and volume the sum; a merged bar is gap-filled only if every
    member was.
    """
    target_ms = parse_interval(target_interval)
    if target_ms % series.interval_ms:
        raise DataError(
            f"target interval {target_ms} ms is not a multiple of source interval "
            f"{series.interval_ms} ms"
        )
    _check_interval(target_ms)
    if len(series) == 0:
        raise DataError("cannot aggregate an empty series")
    if target_ms == series.interval_ms:
        return series.take(np.arange(len(series)))
    t, o, h, lo, c, v, g = _group_sorted(series.open_time, series.open, series.high, series.low,
                                         series.close, series.volume, series.gap_filled, target_ms)
    holes = np.unique(series.holes // target_ms * target_ms)
    holes = holes[~np.isin(holes, t)]
    return GridSeries(series.asset, target_ms, t, o, h, lo, c, v, g, series.timezone_offset, holes)
