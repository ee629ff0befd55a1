"""CSV renderings of series artifacts and their full-precision JSON twins.

Each ``*_json`` function has a ``*_from_json`` inverse; re-rendering the
parsed twin reproduces the CSV exactly.
"""

from __future__ import annotations

import csv
import io
import json
from datetime import date

import numpy as np

from hfseason.ingest import GridSeries, grid_to_csv
from hfseason.stats import DensityCurve, RegimeLabels, normal_pdf
from hfseason.timeseries import ReturnSeries


def _floats(a) -> list[float]:
    return [float(v) for v in a]


def grid_json(series: GridSeries) -> str:
    return json.dumps({
        "asset": series.asset, "interval_ms": series.interval_ms,
        "timezone_offset": series.timezone_offset,
        "open_time": [int(t) for t in series.open_time],
        "open": _floats(series.open), "high": _floats(series.high), "low": _floats(series.low),
        "close": _floats(series.close), "volume": _floats(series.volume),
        "gap_filled": [bool(g) for g in series.gap_filled],
        "holes": [int(h) for h in series.holes],
    })


def grid_from_json(text: str) -> GridSeries:
    d = json.loads(text)
    return GridSeries(
        d["asset"], int(d["interval_ms"]), np.array(d["open_time"], dtype=np.int64),
        *(np.array(d[k], dtype=float) for k in ("open", "high", "low", "close", "volume")),
        np.array(d["gap_filled"], dtype=bool), int(d["timezone_offset"]),
        np.array(d["holes"], dtype=np.int64),
    )


def grid_csv(series: GridSeries) -> str:
    return grid_to_csv(series)


def returns_json(rs: ReturnSeries) -> str:
    return json.dumps({
        "asset": rs.asset, "interval_ms": rs.interval_ms,
        "timestamps": [int(t) for t in rs.timestamps], "simple": _floats(rs.simple),
        "log": _floats(rs.log), "abs_log": _floats(rs.abs_log),
        "gap_filled": [bool(g) for g in rs.gap_filled],
    })


def returns_from_json(text: str) -> ReturnSeries:
    d = json.loads(text)
    return ReturnSeries(d["asset"], int(d["interval_ms"]), np.array(d["timestamps"], dtype=np.int64),
                        np.array(d["simple"], dtype=float), np.array(d["log"], dtype=float),
                        np.array(d["abs_log"], dtype=float), np.array(d["gap_filled"], dtype=bool))


def density_csv(curves: list[DensityCurve]) -> str:
    """Long format: one row per (asset, grid point) with the normal overlay."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["asset", "x", "density", "normal"])
    for c in curves:
        mean, sd = c.reference_normal
        ref = normal_pdf(c.grid, mean, sd)
        for x, f, n in zip(c.grid, c.density, ref):
            w.writerow([c.asset, repr(float(x)), repr(float(f)), repr(float(n))])
    return buf.getvalue()


def density_json(curves: list[DensityCurve]) -> str:
    return json.dumps({"curves": [
        {"asset": c.asset, "bandwidth": c.bandwidth, "reference_normal": list(c.reference_normal),
         "grid": _floats(c.grid), "density": _floats(c.density)} for c in curves]})


def density_from_json(text: str) -> list[DensityCurve]:
    return [DensityCurve(np.array(c["grid"], dtype=float), np.array(c["density"], dtype=float),
                         float(c["bandwidth"]), tuple(c["reference_normal"]), c["asset"])
            for c in json.loads(text)["curves"]]


def regimes_csv(labels: RegimeLabels) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["date", "index_return", "label"])
    for d, r, lab in zip(labels.dates, labels.daily_returns, labels.labels):
        w.writerow([d.isoformat(), repr(float(r)), lab])
    return buf.getvalue()


def regimes_json(labels: RegimeLabels) -> str:
    return json.dumps({"tz_offset_minutes": labels.tz_offset_minutes,
                       "dates": [d.isoformat() for d in labels.dates], "labels": labels.labels,
                       "daily_returns": _floats(labels.daily_returns)})


def regimes_from_json(text: str) -> RegimeLabels:
    d = json.loads(text)
    return RegimeLabels([date.fromisoformat(s) for s in d["dates"]], list(d["labels"]),
                        np.array(d["daily_returns"], dtype=float), int(d["tz_offset_minutes"]))
