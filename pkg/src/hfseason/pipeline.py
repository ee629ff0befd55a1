"""Command implementations: load inputs, compute, and write a run bundle.

Every command writes into ``<out>/<run-id>/`` where the run id is derived
from the configuration snapshot, the command arguments and the input
digests, so rerunning a command on the same inputs rewrites the same
directory with the same bytes. Per-asset work runs on a thread pool bounded
by ``jobs``; results are gathered in submission order and the manifest is
sorted, so the output does not depend on scheduling.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import shutil
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import reduce
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from hfseason.config import RunConfig
from hfseason.errors import ConfigError, DataError, HFSeasonError
from hfseason.ingest import GridSeries, format_interval, load_series, parse_interval
from hfseason.report import figures, series as sr
from hfseason.report.bundle import ReportBundle, run_id_for, sha256_file
from hfseason.report.tables import build_corr_tables, build_table1
from hfseason.seasonality import (
    ResponseKind,
    SeasonalProfile,
    encode_covariates,
    fit_seasonality,
    qualitative_checks,
    response_series,
)
from hfseason.stats import (
    DOWN,
    UP,
    RegimeLabels,
    conditional_correlation,
    day_to_date,
    density_curve,
    local_day,
    regime_labels,
    summary_table,
)
from hfseason.timeseries import ReturnSeries, aggregate_bars

logger = logging.getLogger(__name__)


@dataclass
class RunOptions:
    jobs: int | None = None
    skip_bad_assets: bool = False
    svg: bool = False

    @property
    def workers(self) -> int:
        return max(1, self.jobs if self.jobs else (os.cpu_count() or 1))


@dataclass
class Inputs:
    grids: dict[str, GridSeries]
    index: GridSeries | None
    digests: dict[str, dict]
    skipped: dict[str, str] = field(default_factory=dict)


def parallel_map(fn: Callable, items: Iterable, jobs: int) -> list:
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(jobs, len(items))) as pool:
        return list(pool.map(fn, items))


def _digest(sym: str, path: Path) -> dict:
    try:
        return {"file": path.name, "sha256": sha256_file(path)}
    except OSError as exc:
        raise DataError(f"{sym}: cannot read input {path.name}", [str(exc)]) from None


def load_inputs(cfg: RunConfig, opts: RunOptions) -> Inputs:
    """Parse every configured input onto the grid and cut it to the window."""
    window = cfg.window_ms()

    def load(item):
        sym, path = item
        try:
            digest = _digest(sym, path)
            g = load_series(path, cfg.interval_ms, cfg.gap_policy, asset=sym,
                            timezone_offset=cfg.tz_offset_minutes,
                            max_error_fraction=cfg.max_row_errors)
            if window is not None:
                g = g.between(*window)
            if len(g) < 2:
                raise DataError("empty window",
                                [f"{sym}: {len(g)} bar(s) in {cfg.window[0]}..{cfg.window[1]}"
                                 if cfg.window else f"{sym}: fewer than two bars"])
            return sym, digest, g, None
        except HFSeasonError as exc:
            return sym, None, None, exc

    results = parallel_map(load, cfg.assets, opts.workers)
    grids, digests, skipped = {}, {}, {}
    for sym, digest, g, exc in results:
        if exc is not None:
            if not opts.skip_bad_assets:
                raise exc
            logger.warning("skipping %s: %s", sym, exc)
            skipped[sym] = str(exc)
            continue
        grids[sym] = g
        digests[sym] = digest
    if not grids:
        if skipped and all(v == "empty window" for v in skipped.values()):
            raise DataError("empty window", sorted(skipped))
        raise DataError("no usable assets", [f"{k}: {v}" for k, v in sorted(skipped.items())])

    index = None
    if cfg.index is not None:
        sym, path = cfg.index
        digests[f"index:{sym}"] = _digest(sym, path)
        index = load_series(path, cfg.interval_ms, cfg.gap_policy, asset=sym,
                            timezone_offset=cfg.tz_offset_minutes,
                            max_error_fraction=cfg.max_row_errors)
    return Inputs(dict(sorted(grids.items())), index, digests, skipped)


def _open_bundle(cfg: RunConfig, inputs: Inputs, command: str, **extra) -> ReportBundle:
    params = {"command": command, **cfg.snapshot(), **extra}
    run_id = run_id_for(params, inputs.digests)
    bundle = ReportBundle(Path(cfg.out), run_id, params, inputs.digests, skipped=inputs.skipped)
    if bundle.run_dir.exists():
        shutil.rmtree(bundle.run_dir)
    return bundle


def _per_asset(inputs: Inputs, opts: RunOptions, fn: Callable[[str, GridSeries], object]) -> dict:
    """Run ``fn`` per asset; failures abort unless bad assets may be skipped."""

    def guarded(item):
        sym, g = item
        try:
            return sym, fn(sym, g), None
        except HFSeasonError as exc:
            return sym, None, exc

    out = {}
    for sym, value, exc in parallel_map(guarded, inputs.grids.items(), opts.workers):
        if exc is not None:
            if not opts.skip_bad_assets:
                raise exc
            logger.warning("skipping %s: %s", sym, exc)
            inputs.skipped[sym] = str(exc)
            continue
        out[sym] = value
    if not out:
        raise DataError("no usable assets", [f"{k}: {v}" for k, v in sorted(inputs.skipped.items())])
    return out


def _labels(cfg: RunConfig, inputs: Inputs) -> RegimeLabels:
    if inputs.index is None:
        raise ConfigError("invalid configuration", ["index: regime correlations need index.SYMBOL = path"])
    window = cfg.window
    if window is None:
        days = [int(g.open_time[0]) for g in inputs.grids.values()]
        ends = [int(g.open_time[-1]) for g in inputs.grids.values()]
        lo = int(local_day(np.array([min(days)]), cfg.tz_offset_minutes)[0])
        hi = int(local_day(np.array([max(ends)]), cfg.tz_offset_minutes)[0])
        window = (day_to_date(lo), day_to_date(hi))
    return regime_labels(inputs.index, cfg.tz_offset_minutes, window, cfg.zero_label)


def aligned_returns(returns: dict[str, ReturnSeries]) -> dict[str, ReturnSeries]:
    """Restrict every asset to the return timestamps all assets share."""
    common = reduce(np.intersect1d, [r.timestamps for r in returns.values()])
    if len(common) == 0:
        raise DataError("misaligned grids: assets share no timestamps")
    return {a: r.at(common) for a, r in returns.items()}


# --- artifact writers ---------------------------------------------------


def _write_grid(bundle: ReportBundle, kind: str, sym: str, g: GridSeries, stem: str) -> None:
    bundle.write(kind, sym, f"series/{stem}.csv", sr.grid_csv(g))
    bundle.write(kind, sym, f"series/{stem}.json", sr.grid_json(g))


def _write_table1(bundle: ReportBundle, cfg: RunConfig, returns: dict[str, ReturnSeries]) -> None:
    t1 = build_table1(summary_table(list(returns.values()), cfg.exclude_gap_filled))
    bundle.write("table1", "", "tables/table1.csv", t1.csv)
    bundle.write("table1", "", "tables/table1.json", t1.json)


def _write_corr(bundle: ReportBundle, cfg: RunConfig, inputs: Inputs,
                returns: dict[str, ReturnSeries]) -> None:
    labels = _labels(cfg, inputs)
    bundle.write("regimes", inputs.index.asset, "series/regimes.csv", sr.regimes_csv(labels))
    bundle.write("regimes", inputs.index.asset, "series/regimes.json", sr.regimes_json(labels))
    aligned = aligned_returns(returns)
    up = conditional_correlation(aligned, labels, UP, cfg.exclude_gap_filled)
    down = conditional_correlation(aligned, labels, DOWN, cfg.exclude_gap_filled)
    for t in build_corr_tables(up, down):
        bundle.write("correlation", "", f"tables/{t.name}.csv", t.csv)
        bundle.write("correlation", "", f"tables/{t.name}.json", t.json)


def _write_density(bundle: ReportBundle, cfg: RunConfig, returns: dict[str, ReturnSeries],
                   opts: RunOptions) -> None:
    rets = {a: (r.observed() if cfg.exclude_gap_filled else r) for a, r in returns.items()}
    ref_sym = cfg.density_reference if cfg.density_reference in rets else (
        "BTC" if "BTC" in rets else next(iter(rets)))
    ref = rets[ref_sym].log
    curves = parallel_map(lambda a: density_curve(rets[a].log, reference=ref, asset=a),
                          sorted(rets), opts.workers)
    bundle.write("density", "", "series/density.csv", sr.density_csv(curves))
    bundle.write("density", "", "series/density.json", sr.density_json(curves))
    if opts.svg:
        sd = float(np.std(ref, ddof=1))
        mean = float(np.mean(ref))
        svg = figures.render_svg(figures.DENSITY, {
            "curves": curves, "xlim": (mean - 6 * sd, mean + 6 * sd),
            "title": f"log-return densities, normal fitted to {ref_sym}"})
        bundle.write("figure", "", "svg/density.svg", svg)


def _season_summary_rows(profiles: list[tuple[SeasonalProfile, dict]]) -> tuple[str, str]:
    cols = ["asset", "response", "n", "r_squared", "edf_total", "edf_daily", "edf_weekly",
            "peak_time", "low_time", "evening_peak", "night_low", "weekend_trough"]
    rows = []
    for p, q in profiles:
        s = p.fit_summary
        rows.append({"asset": p.asset, "response": p.response_kind, "n": s["n"],
                     "r_squared": s["r_squared"], "edf_total": s["edf_total"],
                     "edf_daily": s["edf"]["daily"], "edf_weekly": s["edf"]["weekly"],
                     "peak_time": q["peak_time"], "low_time": q["low_time"],
                     "evening_peak": q["evening_peak"], "night_low": q["night_low"],
                     "weekend_trough": q["weekend_trough"]})
    return _rows_csv(cols, rows), json.dumps({"table": "seasonality_summary", "columns": cols,
                                              "rows": rows}, indent=2)


def _rows_csv(cols: list[str], rows: list[dict]) -> str:
    def fmt(v):
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, float):
            return f"{v:.4f}"
        return str(v)

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([fmt(r[c]) for c in cols])
    return buf.getvalue()


def render_rows_csv(text: str) -> str:
    """Re-render a summary table CSV from its JSON twin."""
    d = json.loads(text)
    return _rows_csv(d["columns"], d["rows"])


def seasonality_for(cfg: RunConfig, g: GridSeries, kind: ResponseKind) -> SeasonalProfile:
    rs = ReturnSeries.from_grid(g)
    ts, y, filled = response_series(kind, rs, g)
    if cfg.exclude_gap_filled:
        ts, y = ts[~filled], y[~filled]
    cov = encode_covariates(ts, cfg.interval_ms, cfg.tz_offset_minutes)
    return fit_seasonality(y, cov, cfg.season_config(), kind, g.asset)


def _write_profile(bundle: ReportBundle, p: SeasonalProfile, svg: bool) -> dict:
    q = qualitative_checks(p).to_dict()
    stem = f"seasonal/{p.asset}_{p.response_kind}"
    payload = p.to_dict()
    payload["qualitative"] = q
    bundle.write("seasonality", p.asset, f"{stem}_daily.csv", p.daily_csv())
    bundle.write("seasonality", p.asset, f"{stem}_weekly.csv", p.weekly_csv())
    bundle.write("seasonality", p.asset, f"{stem}.json", json.dumps(payload, indent=2, sort_keys=True))
    if svg:
        for kind, which in ((figures.SEASONAL_DAILY, "daily"), (figures.SEASONAL_WEEKLY, "weekly")):
            bundle.write("figure", p.asset, f"svg/{p.asset}_{p.response_kind}_{which}.svg",
                         figures.render_svg(kind, p))
    return q


def _line_svg(rs: ReturnSeries, values, ylabel: str, title: str) -> str:
    return figures.render_svg(figures.LINE, {"timestamps": rs.timestamps, "values": values,
                                             "ylabel": ylabel, "title": title})


# --- commands -----------------------------------------------------------


def cmd_ingest(cfg: RunConfig, opts: RunOptions | None = None) -> ReportBundle:
    """Write each asset's aligned bar grid (CSV + JSON)."""
    opts = opts or RunOptions()
    inputs = load_inputs(cfg, opts)
    bundle = _open_bundle(cfg, inputs, "ingest")
    tag = format_interval(cfg.interval_ms)
    _per_asset(inputs, opts, lambda s, g: _write_grid(bundle, "bars", s, g, f"{s}_bars_{tag}"))
    bundle.finalize()
    return bundle


def cmd_stats(cfg: RunConfig, opts: RunOptions | None = None) -> ReportBundle:
    """Summary-statistics table over each asset's log returns."""
    opts = opts or RunOptions()
    inputs = load_inputs(cfg, opts)
    returns = _per_asset(inputs, opts, lambda s, g: ReturnSeries.from_grid(g))
    bundle = _open_bundle(cfg, inputs, "stats")
    _write_table1(bundle, cfg, returns)
    bundle.finalize()
    return bundle


def cmd_corr(cfg: RunConfig, opts: RunOptions | None = None) -> ReportBundle:
    """UP and DOWN regime correlation tables."""
    opts = opts or RunOptions()
    inputs = load_inputs(cfg, opts)
    returns = _per_asset(inputs, opts, lambda s, g: ReturnSeries.from_grid(g))
    bundle = _open_bundle(cfg, inputs, "corr")
    _write_corr(bundle, cfg, inputs, returns)
    bundle.finalize()
    return bundle


def cmd_candles(cfg: RunConfig, target_interval=None, opts: RunOptions | None = None) -> ReportBundle:
    """Aggregate each asset's bars to ``target_interval`` (default: the configured candle interval)."""
    opts = opts or RunOptions()
    target = cfg.candle_interval_ms if target_interval is None else target_interval
    inputs = load_inputs(cfg, opts)
    tag = format_interval(_target_ms(cfg, target))
    bundle = _open_bundle(cfg, inputs, "candles", target_interval=tag)

    def work(sym, g):
        c = aggregate_bars(g, target)
        _write_grid(bundle, "candles", sym, c, f"{sym}_candles_{tag}")
        if opts.svg:
            bundle.write("figure", sym, f"svg/{sym}_candles_{tag}.svg",
                         figures.render_svg(figures.CANDLES, c))

    _per_asset(inputs, opts, work)
    bundle.finalize()
    return bundle


def _target_ms(cfg: RunConfig, target) -> int:
    try:
        ms = parse_interval(target)
    except ValueError as exc:
        raise ConfigError("invalid configuration", [f"target interval: {exc}"]) from None
    if ms % cfg.interval_ms:
        raise ConfigError("invalid configuration",
                          [f"target interval {format_interval(ms)} is not a multiple of "
                           f"{format_interval(cfg.interval_ms)}"])
    return ms


def cmd_seasonality(cfg: RunConfig, response_kind=None, opts: RunOptions | None = None) -> ReportBundle:
    """Fit daily and weekly seasonality curves for one response per asset."""
    opts = opts or RunOptions()
    kinds = cfg.responses if response_kind is None else (ResponseKind(response_kind),)
    inputs = load_inputs(cfg, opts)
    bundle = _open_bundle(cfg, inputs, "seasonality", responses=[k.value for k in kinds])

    def work(sym, g):
        return [(p, _write_profile(bundle, p, opts.svg))
                for p in (seasonality_for(cfg, g, k) for k in kinds)]

    done = _per_asset(inputs, opts, work)
    csv_text, json_text = _season_summary_rows([pq for rows in done.values() for pq in rows])
    bundle.write("seasonality_summary", "", "tables/seasonality_summary.csv", csv_text)
    bundle.write("seasonality_summary", "", "tables/seasonality_summary.json", json_text)
    bundle.finalize()
    return bundle


def cmd_report(cfg: RunConfig, opts: RunOptions | None = None) -> ReportBundle:
    """Run the whole pipeline and write every artifact plus the manifest."""
    opts = opts or RunOptions()
    inputs = load_inputs(cfg, opts)
    bundle = _open_bundle(cfg, inputs, "report", svg=opts.svg)
    tag = format_interval(cfg.interval_ms)
    ctag = format_interval(cfg.candle_interval_ms)
    # seasonality fits dominate the run time; keep them on the outer pool
    inner = RunOptions(jobs=1, skip_bad_assets=opts.skip_bad_assets, svg=opts.svg)

    def work(sym, g):
        rs = ReturnSeries.from_grid(g)
        _write_grid(bundle, "bars", sym, g, f"{sym}_bars_{tag}")
        bundle.write("returns", sym, f"series/{sym}_returns.csv", rs.to_csv())
        bundle.write("returns", sym, f"series/{sym}_returns.json", sr.returns_json(rs))
        candles = aggregate_bars(g, cfg.candle_interval_ms)
        _write_grid(bundle, "candles", sym, candles, f"{sym}_candles_{ctag}")
        if opts.svg:
            bundle.write("figure", sym, f"svg/{sym}_candles_{ctag}.svg",
                         figures.render_svg(figures.CANDLES, candles))
            bundle.write("figure", sym, f"svg/{sym}_returns.svg",
                         _line_svg(rs, rs.log, "log return", f"{sym} log returns"))
            bundle.write("figure", sym, f"svg/{sym}_volatility.svg",
                         _line_svg(rs, rs.abs_log, "|log return|", f"{sym} volatility"))
        profiles = [(p, _write_profile(bundle, p, opts.svg))
                    for p in (seasonality_for(cfg, g, k) for k in cfg.responses)]
        return rs, profiles

    done = _per_asset(inputs, opts, work)
    returns = {s: v[0] for s, v in done.items()}
    _write_table1(bundle, cfg, returns)
    if inputs.index is not None and len(returns) >= 2:
        _write_corr(bundle, cfg, inputs, returns)
    _write_density(bundle, cfg, returns, inner)
    csv_text, json_text = _season_summary_rows([pq for v in done.values() for pq in v[1]])
    bundle.write("seasonality_summary", "", "tables/seasonality_summary.csv", csv_text)
    bundle.write("seasonality_summary", "", "tables/seasonality_summary.json", json_text)
    bundle.finalize()
    return bundle
