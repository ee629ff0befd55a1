"""Synthetic inputs with known structure, for tests and demos.

``write_fixture`` produces irregular tick files for a few correlated assets
(diurnal volatility and activity peaking in the local evening, quieter
weekends) plus an index as 5-minute bars with epoch-millisecond stamps, and
a matching run configuration.
"""

from __future__ import annotations

import argparse
import csv
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from hfseason.ingest import MS_PER_DAY, format_timestamp

MINUTE_MS = 60_000


def diurnal_sine(timestamps_ms, tz_offset_minutes: int = 60, peak_minute: int = 18 * 60,
                 amplitude: float = 1.0) -> np.ndarray:
    """``amplitude * cos`` over the local day with its maximum at ``peak_minute``."""
    local = (np.asarray(timestamps_ms, dtype=np.int64) + tz_offset_minutes * MINUTE_MS) % MS_PER_DAY
    phase = 2 * np.pi * (local / MINUTE_MS - peak_minute) / 1440.0
    return amplitude * np.cos(phase)


def is_weekend(timestamps_ms, tz_offset_minutes: int = 60) -> np.ndarray:
    day = (np.asarray(timestamps_ms, dtype=np.int64) + tz_offset_minutes * MINUTE_MS) // MS_PER_DAY
    return (day + 3) % 7 >= 5


def seasonal_panel(days: int = 62, start: str = "2018-07-01", tz_offset_minutes: int = 60,
                   interval_ms: int = 300_000, amplitude: float = 1.0, weekend_level: float = -1.0,
                   noise: float = 0.1, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Response on a regular grid: diurnal sine + weekend shift + Gaussian noise.

    ``start`` is a local date; the grid covers ``days`` whole local days.
    """
    d0 = datetime.fromisoformat(start).replace(tzinfo=timezone.utc)
    t0 = int(d0.timestamp() * 1000) - tz_offset_minutes * MINUTE_MS
    ts = t0 + interval_ms * np.arange(days * MS_PER_DAY // interval_ms, dtype=np.int64)
    rng = np.random.default_rng(seed)
    y = (diurnal_sine(ts, tz_offset_minutes, amplitude=amplitude)
         + weekend_level * is_weekend(ts, tz_offset_minutes) + noise * rng.standard_normal(len(ts)))
    return ts, y


def _activity(ts_ms: np.ndarray, tz_offset_minutes: int) -> np.ndarray:
    """Relative trading activity: evening peak, night trough, quieter weekend."""
    act = 1.0 + 0.6 * diurnal_sine(ts_ms, tz_offset_minutes)
    return act * np.where(is_weekend(ts_ms, tz_offset_minutes), 0.55, 1.0)


def simulate_minutes(start_ms: int, minutes: int, n_assets: int, corr: float, seed: int,
                     tz_offset_minutes: int = 60):
    """Correlated one-minute log-price paths with activity-scaled volatility."""
    rng = np.random.default_rng(seed)
    t = start_ms + MINUTE_MS * np.arange(minutes, dtype=np.int64)
    cov = np.full((n_assets, n_assets), corr) + (1 - corr) * np.eye(n_assets)
    shocks = rng.standard_normal((minutes, n_assets)) @ np.linalg.cholesky(cov).T
    # a common daily drift so the index has clear up and down days
    day = (t + tz_offset_minutes * MINUTE_MS) // MS_PER_DAY
    _, day_idx = np.unique(day, return_inverse=True)
    drift = rng.choice([-1.0, 1.0], size=day_idx.max() + 1) * 4e-5
    vol = 6e-4 * _activity(t, tz_offset_minutes)
    logp = np.cumsum(shocks * vol[:, None] + drift[day_idx, None], axis=0)
    return t, logp


def write_fixture(out_dir: str | Path, days: int = 8, start: str = "2018-07-01",
                  symbols=("BTC", "ETH", "XRP"), tz_offset_minutes: int = 60, seed: int = 7) -> Path:
    """Write tick CSVs, an index bar CSV and ``config.txt``; return the config path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    d0 = datetime.fromisoformat(start).replace(tzinfo=timezone.utc)
    t_local0 = int(d0.timestamp() * 1000) - tz_offset_minutes * MINUTE_MS
    start_ms = t_local0 - 60 * MINUTE_MS  # an hour before the window
    minutes = (days + 1) * 1440 + 60
    t, logp = simulate_minutes(start_ms, minutes, len(symbols), 0.6, seed, tz_offset_minutes)
    rng = np.random.default_rng(seed + 1)
    base = {"BTC": 6400.0, "ETH": 450.0, "XRP": 0.45}

    for j, sym in enumerate(symbols):
        p0 = base.get(sym, 100.0)
        price = p0 * np.exp(logp[:, j])
        # irregular ticks: Poisson counts per minute scaled by activity
        counts = rng.poisson(0.35 * _activity(t, tz_offset_minutes))
        minute_idx = np.repeat(np.arange(minutes), counts)
        offsets = rng.integers(0, MINUTE_MS, size=len(minute_idx))
        ts = t[minute_idx] + offsets
        order = np.argsort(ts, kind="stable")
        ts, minute_idx = ts[order], minute_idx[order]
        px = price[minute_idx] * np.exp(1e-4 * rng.standard_normal(len(ts)))
        qty = rng.lognormal(0.0, 1.0, len(ts)) * _activity(ts, tz_offset_minutes)
        digits = 2 if p0 >= 10 else 5
        with open(out / f"{sym.lower()}_ticks.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["timestamp", "price", "volume"])
            for a, b, c in zip(ts, px, qty):
                w.writerow([format_timestamp(int(a)), f"{b:.{digits}f}", f"{c:.4f}"])

    # equally weighted index of normalised prices, as 5-minute bars
    idx = 1000.0 * np.exp(logp.mean(axis=1))
    bucket = (t - t[0]) // (5 * MINUTE_MS)
    starts = np.flatnonzero(np.r_[True, bucket[1:] != bucket[:-1]])
    ends = np.r_[starts[1:], len(t)] - 1
    with open(out / "crix_5m.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["open_time", "open", "high", "low", "close", "volume"])
        for s, e in zip(starts, ends):
            seg = idx[s:e + 1]
            w.writerow([int(t[s]), f"{seg[0]:.4f}", f"{seg.max():.4f}", f"{seg.min():.4f}",
                        f"{seg[-1]:.4f}", "0"])

    end = (d0 + timedelta(days=days - 1)).date()
    lines = ["# synthetic fixture: three assets and an index"]
    lines += [f"asset.{s} = {s.lower()}_ticks.csv" for s in symbols]
    lines += ["index.CRIX = crix_5m.csv", "interval = 5m", f"window = {d0.date()}:{end}",
              f"tz_offset = {tz_offset_minutes}", "gap_policy = forward_fill", "daily_knots = 24",
              "weekly_k = 7", "candle_interval = 60m", "responses = volatility,volume", "out = out"]
    cfg = out / "config.txt"
    cfg.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return cfg


def main(argv=None) -> None:
    p = argparse.ArgumentParser(description="write a synthetic input fixture")
    p.add_argument("out_dir")
    p.add_argument("--days", type=int, default=8)
    p.add_argument("--start", default="2018-07-01")
    p.add_argument("--seed", type=int, default=7)
    args = p.parse_args(argv)
    print(write_fixture(args.out_dir, days=args.days, start=args.start, seed=args.seed))


if __name__ == "__main__":
    main()
