"""CSV ingestion and alignment of irregular observations onto a regular grid.

Timestamps are held as integer epoch milliseconds (UTC) throughout. The
display offset only matters when covariates are encoded for seasonality.
"""

from __future__ import annotations

import csv
import enum
import io
import logging
import math
import re
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from hfseason.errors import DataError, SchemaError

logger = logging.getLogger(__name__)

MS_PER_DAY = 86_400_000
DEFAULT_INTERVAL_MS = 300_000
DEFAULT_ROW_ERROR_THRESHOLD = 0.001

_EPOCH_RE = re.compile(r"^-?\d+$")
_INTERVAL_RE = re.compile(r"^\s*(\d+)\s*(ms|s|m|min|h|d)\s*$")
_INTERVAL_UNITS = {"ms": 1, "s": 1000, "m": 60_000, "min": 60_000, "h": 3_600_000, "d": MS_PER_DAY}


class GapPolicy(str, enum.Enum):
    FORWARD_FILL = "forward_fill"
    DROP = "drop"


def parse_interval(value: str | int | timedelta) -> int:
    """Return an interval in milliseconds from ``"5m"``, a timedelta or an int (ms)."""
    if isinstance(value, timedelta):
        ms = int(round(value.total_seconds() * 1000))
    elif isinstance(value, (int, np.integer)):
        ms = int(value)
    else:
        m = _INTERVAL_RE.match(str(value))
        if not m:
            raise ValueError(f"cannot parse interval {value!r}")
        ms = int(m.group(1)) * _INTERVAL_UNITS[m.group(2)]
    if ms <= 0:
        raise ValueError("interval must be positive")
    return ms


def format_interval(ms: int) -> str:
    for unit, size in (("d", MS_PER_DAY), ("h", 3_600_000), ("m", 60_000), ("s", 1000)):
        if ms % size == 0:
            return f"{ms // size}{unit}"
    return f"{ms}ms"


def parse_timestamp(text: str, mode: str | None = None) -> int:
    """Parse ISO-8601 (with zone) or integer epoch milliseconds to epoch ms.

    ``mode`` is ``"epoch_ms"``, ``"iso"`` or None to sniff from the text.
    """
    text = text.strip()
    if mode is None:
        mode = "epoch_ms" if _EPOCH_RE.match(text) else "iso"
    if mode == "epoch_ms":
        if not _EPOCH_RE.match(text):
            raise ValueError(f"expected epoch milliseconds, got {text!r}")
        return int(text)
    iso = text[:-1] + "+00:00" if text.endswith(("Z", "z")) else text
    try:
        dt = datetime.fromisoformat(iso)
    except ValueError:
        raise ValueError(f"unparseable timestamp {text!r}") from None
    if dt.tzinfo is None:
        raise ValueError(f"timestamp {text!r} has no zone designator")
    delta = dt - datetime(1970, 1, 1, tzinfo=timezone.utc)
    return (delta.days * 86_400 + delta.seconds) * 1000 + delta.microseconds // 1000


def format_timestamp(ms: int) -> str:
    """ISO-8601 UTC text for epoch milliseconds, with a ``Z`` suffix."""
    dt = datetime(1970, 1, 1, tzinfo=timezone.utc) + timedelta(milliseconds=int(ms))
    if ms % 1000:
        return dt.strftime("%Y-%m-%dT%H:%M:%S.") + f"{ms % 1000:03d}Z"
    return dt.strftime("%Y-%m-%dT%H:%M:%SZ")


def to_datetime(ms: int) -> datetime:
    return datetime(1970, 1, 1, tzinfo=timezone.utc) + timedelta(milliseconds=int(ms))


@dataclass(frozen=True)
class RawRecord:
    timestamp: datetime
    price: float
    volume: float
    asset: str = ""


@dataclass(frozen=True)
class Bar:
    open_time: datetime
    open: float
    high: float
    low: float
    close: float
    volume: float
    gap_filled: bool = False
    interval: timedelta = timedelta(minutes=5)


@dataclass(frozen=True)
class RowError:
    line: int
    message: str

    def __str__(self) -> str:
        return f"line {self.line}: {self.message}"


@dataclass(frozen=True)
class ColumnSchema:
    """Maps CSV header names onto record fields.

    Tick files name ``price``; pre-barred files name ``open/high/low/close``.
    """

    timestamp: str = "timestamp"
    price: str | None = "price"
    volume: str = "volume"
    open: str | None = None
    high: str | None = None
    low: str | None = None
    close: str | None = None
    gap_filled: str | None = None

    @property
    def is_bars(self) -> bool:
        return self.close is not None

    @classmethod
    def infer(cls, header: Sequence[str]) -> "ColumnSchema":
        names = {h.strip().lower(): h.strip() for h in header}

        def pick(*cands: str) -> str | None:
            for c in cands:
                if c in names:
                    return names[c]
            return None

        ts = pick("timestamp", "open_time", "time", "ts", "datetime", "date")
        vol = pick("volume", "vol", "qty", "size", "amount")
        if ts is None or vol is None:
            raise SchemaError(f"cannot infer timestamp/volume columns from header {list(header)}")
        if all(pick(c) for c in ("open", "high", "low", "close")):
            return cls(timestamp=ts, price=None, volume=vol, open=pick("open"), high=pick("high"),
                       low=pick("low"), close=pick("close"), gap_filled=pick("gap_filled"))
        price = pick("price", "close", "last", "px")
        if price is None:
            raise SchemaError(f"cannot infer price column from header {list(header)}")
        return cls(timestamp=ts, price=price, volume=vol)


TICK_SCHEMA = ColumnSchema()
BAR_SCHEMA = ColumnSchema(timestamp="open_time", price=None, open="open", high="high", low="low",
                          close="close", gap_filled="gap_filled")


@dataclass
class RecordBatch:
    """Parsed rows as parallel arrays, in file order.

    For tick data ``open == high == low == close == price``.
    """

    asset: str
    timestamp_ms: np.ndarray
    open: np.ndarray
    high: np.ndarray
    low: np.ndarray
    close: np.ndarray
    volume: np.ndarray
    gap_filled: np.ndarray | None = None
    errors: list[RowError] = field(default_factory=list)
    line_numbers: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.timestamp_ms)

    def __iter__(self) -> Iterator[RawRecord]:
        for t, p, v in zip(self.timestamp_ms, self.close, self.volume):
            yield RawRecord(to_datetime(int(t)), float(p), float(v), self.asset)

    @classmethod
    def from_records(cls, records: Iterable[RawRecord], asset: str | None = None) -> "RecordBatch":
        records = list(records)
        assets = {r.asset for r in records}
        if len(assets) > 1:
            raise DataError(f"records mix several assets: {sorted(assets)}")
        ts = np.array([_datetime_ms(r.timestamp) for r in records], dtype=np.int64)
        p = np.array([r.price for r in records], dtype=float)
        v = np.array([r.volume for r in records], dtype=float)
        name = asset if asset is not None else (assets.pop() if assets else "")
        return cls(name, ts, p, p.copy(), p.copy(), p.copy(), v)


def _datetime_ms(dt: datetime) -> int:
    if dt.tzinfo is None:
        raise DataError("naive datetime; UTC instants required")
    delta = dt - datetime(1970, 1, 1, tzinfo=timezone.utc)
    return (delta.days * 86_400 + delta.seconds) * 1000 + delta.microseconds // 1000


def _parse_float(text: str, what: str) -> float:
    try:
        val = float(text)
    except (TypeError, ValueError):
        raise ValueError(f"unparseable {what} {text!r}") from None
    if not math.isfinite(val):
        raise ValueError(f"non-finite {what} {text!r}")
    return val


def parse_csv(
    path: str | Path,
    schema: ColumnSchema | None = None,
    asset: str | None = None,
    max_error_fraction: float = DEFAULT_ROW_ERROR_THRESHOLD,
) -> RecordBatch:
    """Read a tick or bar CSV into a :class:`RecordBatch`.

    Malformed rows are collected with their line numbers. The call fails
    when their share of data rows exceeds ``max_error_fraction``; otherwise
    they are logged and left out of the batch (and kept on ``batch.errors``).
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"input file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        return parse_csv_text(fh, schema=schema, asset=asset or path.stem,
                              max_error_fraction=max_error_fraction, source=str(path))


def parse_csv_text(
    fh: io.TextIOBase | Iterable[str],
    schema: ColumnSchema | None = None,
    asset: str = "",
    max_error_fraction: float = DEFAULT_ROW_ERROR_THRESHOLD,
    source: str = "<csv>",
) -> RecordBatch:
    reader = csv.reader(fh)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise SchemaError(f"{source}: empty file") from None
    schema = schema or ColumnSchema.infer(header)
    wanted = [schema.timestamp, schema.volume]
    wanted += [schema.open, schema.high, schema.low, schema.close] if schema.is_bars else [schema.price]
    missing = [c for c in wanted if c not in header]
    if missing:
        raise SchemaError(f"{source}: missing column(s) {missing}", [f"header: {header}"])
    col = {name: header.index(name) for name in header}
    gap_col = col.get(schema.gap_filled) if schema.gap_filled else None

    ts_mode: str | None = None
    rows: list[tuple] = []
    lines: list[int] = []
    errors: list[RowError] = []
    n_data = 0
    for cells in reader:
        if not cells or all(not c.strip() for c in cells):
            continue
        n_data += 1
        line = reader.line_num
        try:
            if len(cells) < len(header):
                raise ValueError(f"expected {len(header)} fields, got {len(cells)}")
            raw_ts = cells[col[schema.timestamp]].strip()
            if ts_mode is None:
                ts_mode = "epoch_ms" if _EPOCH_RE.match(raw_ts) else "iso"
            ts = parse_timestamp(raw_ts, ts_mode)
            vol = _parse_float(cells[col[schema.volume]], "volume")
            if vol < 0:
                raise ValueError("negative volume")
            if schema.is_bars:
                o, h, lo, c = (_parse_float(cells[col[k]], k) for k in
                               (schema.open, schema.high, schema.low, schema.close))
                if min(o, h, lo, c) <= 0:
                    raise ValueError("non-positive price")
                if not (lo <= min(o, c) and h >= max(o, c)):
                    raise ValueError("inconsistent OHLC (low/high do not bracket open/close)")
            else:
                p = _parse_float(cells[col[schema.price]], "price")
                if p <= 0:
                    raise ValueError("non-positive price")
                o = h = lo = c = p
            gap = False
            if gap_col is not None:
                gap = cells[gap_col].strip().lower() in ("1", "true", "yes")
        except ValueError as exc:
            errors.append(RowError(line, str(exc)))
            continue
        rows.append((ts, o, h, lo, c, vol, gap))
        lines.append(line)

    if n_data and len(errors) > max_error_fraction * n_data:
        raise DataError(
            f"{source}: {len(errors)} malformed row(s) of {n_data} exceeds threshold "
            f"{max_error_fraction:.4%}",
            [str(e) for e in errors[:50]],
        )
    for e in errors:
        logger.warning("%s: skipped %s", source, e)

    arr = np.array(rows, dtype=float).reshape(-1, 7)
    ts_arr = np.array([r[0] for r in rows], dtype=np.int64)
    return RecordBatch(
        asset=asset,
        timestamp_ms=ts_arr,
        open=arr[:, 1].copy(),
        high=arr[:, 2].copy(),
        low=arr[:, 3].copy(),
        close=arr[:, 4].copy(),
        volume=arr[:, 5].copy(),
        gap_filled=arr[:, 6].astype(bool) if gap_col is not None else None,
        errors=errors,
        line_numbers=np.array(lines, dtype=np.int64),
    )


@dataclass
class GridSeries:
    """Bars on a regular interval grid, stored column-wise.

    Under the forward-fill policy consecutive ``open_time`` values differ by
    exactly one interval. Under the drop policy missing buckets are listed
    in ``holes`` instead of being filled.
    """

    asset: str
    interval_ms: int
    open_time: np.ndarray
    open: np.ndarray
    high: np.ndarray
    low: np.ndarray
    close: np.ndarray
    volume: np.ndarray
    gap_filled: np.ndarray
    timezone_offset: int = 60
    holes: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    def __len__(self) -> int:
        return len(self.open_time)

    @property
    def interval(self) -> timedelta:
        return timedelta(milliseconds=self.interval_ms)

    @property
    def bars(self) -> list[Bar]:
        iv = self.interval
        return [
            Bar(to_datetime(int(t)), float(o), float(h), float(lo), float(c), float(v), bool(g), iv)
            for t, o, h, lo, c, v, g in zip(self.open_time, self.open, self.high, self.low,
                                            self.close, self.volume, self.gap_filled)
        ]

    def take(self, mask_or_index: np.ndarray) -> "GridSeries":
        return GridSeries(
            self.asset, self.interval_ms, self.open_time[mask_or_index], self.open[mask_or_index],
            self.high[mask_or_index], self.low[mask_or_index], self.close[mask_or_index],
            self.volume[mask_or_index], self.gap_filled[mask_or_index], self.timezone_offset,
            self.holes,
        )

    def between(self, start_ms: int, end_ms: int) -> "GridSeries":
        """Bars with ``start_ms <= open_time < end_ms``."""
        mask = (self.open_time >= start_ms) & (self.open_time < end_ms)
        out = self.take(mask)
        out.holes = self.holes[(self.holes >= start_ms) & (self.holes < end_ms)]
        return out

    def validate(self) -> None:
        if len(self) == 0:
            return
        if np.any(self.open_time % self.interval_ms):
            raise DataError("bar open_time off the interval grid")
        if np.any(np.diff(self.open_time) <= 0):
            raise DataError("bars not strictly increasing in time")
        if np.any(self.low > np.minimum(self.open, self.close)) or np.any(
            self.high < np.maximum(self.open, self.close)
        ):
            raise DataError("inconsistent OHLC bar")


def _check_interval(interval_ms: int) -> None:
    if MS_PER_DAY % interval_ms:
        raise DataError(f"interval {format_interval(interval_ms)} does not divide one day")


def _group_sorted(ts: np.ndarray, o, h, lo, c, v, g, interval_ms: int):
    """Reduce time-sorted rows into per-bucket OHLCV."""
    bucket = ts // interval_ms
    starts = np.flatnonzero(np.r_[True, bucket[1:] != bucket[:-1]])
    ends = np.r_[starts[1:], len(ts)] - 1
    return (
        bucket[starts] * interval_ms,
        o[starts],
        np.maximum.reduceat(h, starts),
        np.minimum.reduceat(lo, starts),
        c[ends],
        np.add.reduceat(v, starts),
        np.logical_and.reduceat(g, starts),
    )


def build_grid(
    records: RecordBatch | Sequence[RawRecord],
    interval: str | int | timedelta = DEFAULT_INTERVAL_MS,
    gap_policy: GapPolicy | str = GapPolicy.FORWARD_FILL,
    timezone_offset: int = 60,
) -> GridSeries:
    """Bucket observations into bars of ``interval`` aligned to midnight UTC.

    Within a bucket: open is the first price, high the max, low the min,
    close the last, volume the sum. Ties in time keep input order. Empty
    buckets are forward-filled from the previous close (volume 0, flagged)
    or dropped and reported in ``holes``.
    """
    batch = records if isinstance(records, RecordBatch) else RecordBatch.from_records(records)
    interval_ms = parse_interval(interval)
    _check_interval(interval_ms)
    gap_policy = GapPolicy(gap_policy)
    if len(batch) == 0:
        raise DataError(f"{batch.asset or 'series'}: no records to build a grid from")

    order = np.argsort(batch.timestamp_ms, kind="stable")
    ts = batch.timestamp_ms[order]
    flags = batch.gap_filled[order] if batch.gap_filled is not None else np.zeros(len(ts), bool)
    t, o, h, lo, c, v, g = _group_sorted(
        ts, batch.open[order], batch.high[order], batch.low[order], batch.close[order],
        batch.volume[order], flags, interval_ms,
    )
    full = np.arange(t[0], t[-1] + interval_ms, interval_ms, dtype=np.int64)
    if len(full) == len(t):
        return GridSeries(batch.asset, interval_ms, t, o, h, lo, c, v, g, timezone_offset)

    present = np.isin(full, t)
    if gap_policy is GapPolicy.DROP:
        holes = full[~present]
        logger.info("%s: dropped %d empty bucket(s)", batch.asset, len(holes))
        return GridSeries(batch.asset, interval_ms, t, o, h, lo, c, v, g, timezone_offset, holes)

    pos = np.searchsorted(t, full, side="right") - 1
    prev_close = c[pos]
    filled = ~present
    out_o = prev_close.copy()
    out_h = prev_close.copy()
    out_l = prev_close.copy()
    out_c = prev_close.copy()
    out_v = np.zeros(len(full))
    out_g = np.ones(len(full), dtype=bool)
    out_o[present], out_h[present], out_l[present], out_c[present] = o, h, lo, c
    out_v[present], out_g[present] = v, g
    logger.info("%s: forward-filled %d empty bucket(s)", batch.asset, int(filled.sum()))
    return GridSeries(batch.asset, interval_ms, full, out_o, out_h, out_l, out_c, out_v, out_g,
                      timezone_offset)


def load_series(
    path: str | Path,
    interval: str | int | timedelta = DEFAULT_INTERVAL_MS,
    gap_policy: GapPolicy | str = GapPolicy.FORWARD_FILL,
    asset: str | None = None,
    timezone_offset: int = 60,
    max_error_fraction: float = DEFAULT_ROW_ERROR_THRESHOLD,
) -> GridSeries:
    """Parse a tick or bar file and align it onto the grid."""
    batch = parse_csv(path, asset=asset, max_error_fraction=max_error_fraction)
    return build_grid(batch, interval, gap_policy, timezone_offset)


GRID_COLUMNS = ("open_time", "open", "high", "low", "close", "volume", "gap_filled")


def grid_to_csv(series: GridSeries) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(GRID_COLUMNS)
    for t, o, h, lo, c, v, g in zip(series.open_time, series.open, series.high, series.low,
                                    series.close, series.volume, series.gap_filled):
        w.writerow([format_timestamp(int(t)), repr(float(o)), repr(float(h)), repr(float(lo)),
                    repr(float(c)), repr(float(v)), "true" if g else "false"])
    return buf.getvalue()


def write_grid_csv(series: GridSeries, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(grid_to_csv(series), encoding="utf-8")
    return path


def read_grid_csv(path: str | Path, asset: str | None = None, interval=None) -> GridSeries:
    """Read a file written by :func:`write_grid_csv` without altering bars."""
    path = Path(path)
    batch = parse_csv(path, schema=BAR_SCHEMA, asset=asset or path.stem, max_error_fraction=0.0)
    if len(batch) == 0:
        raise DataError(f"{path}: no bars")
    if interval is None:
        steps = np.diff(batch.timestamp_ms)
        interval = int(steps.min()) if len(steps) else DEFAULT_INTERVAL_MS
    interval_ms = parse_interval(interval)
    series = GridSeries(batch.asset, interval_ms, batch.timestamp_ms, batch.open, batch.high,
                        batch.low, batch.close, batch.volume,
                        batch.gap_filled if batch.gap_filled is not None
                        else np.zeros(len(batch), bool))
    series.validate()
    return series
