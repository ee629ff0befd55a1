"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
error. Failures are reported on stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from hfseason import __version__
from hfseason.config import load_config, parse_window, resolve_out
from hfseason.errors import ConfigError, HFSeasonError
from hfseason.ingest import parse_interval
from hfseason.pipeline import (
    RunOptions,
    cmd_candles,
    cmd_corr,
    cmd_ingest,
    cmd_report,
    cmd_seasonality,
    cmd_stats,
)
from hfseason.seasonality import ResponseKind

COMMANDS = ("ingest", "stats", "corr", "candles", "seasonality", "report")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="run configuration file (key = value)")
    common.add_argument("--interval", help="bar interval, e.g. 5m")
    common.add_argument("--tz-offset", type=int, help="display timezone offset in minutes")
    common.add_argument("--window", help="inclusive local dates START:END")
    common.add_argument("--jobs", type=int, help="worker threads (default: CPU count; 1 = serial)")
    common.add_argument("--skip-bad-assets", action="store_true",
                        help="report and skip assets that fail instead of aborting")
    common.add_argument("--svg", action="store_true", help="also render SVG figures")
    common.add_argument("--out", help="output directory (overrides HFSEASON_OUT and the config)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="hfseason", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("ingest", parents=[common], help="align inputs onto the bar grid")
    sub.add_parser("stats", parents=[common], help="summary statistics table")
    sub.add_parser("corr", parents=[common], help="UP/DOWN regime correlation tables")
    c = sub.add_parser("candles", parents=[common], help="aggregate bars to a coarser interval")
    c.add_argument("--target", help="target interval (default: candle_interval from the config)")
    s = sub.add_parser("seasonality", parents=[common], help="daily and weekly seasonality curves")
    s.add_argument("--response", choices=[k.value for k in ResponseKind])
    r = sub.add_parser("report", parents=[common], help="run the full pipeline")
    r.add_argument("--response", choices=[k.value for k in ResponseKind],
                   help="restrict seasonality to one response")
    return p


def _config_from_args(args):
    cfg = load_config(args.config)
    errors, over = [], {}
    if args.interval:
        try:
            over["interval_ms"] = parse_interval(args.interval)
        except ValueError as exc:
            errors.append(f"--interval: {exc}")
    if args.window:
        try:
            over["window"] = parse_window(args.window)
        except ValueError as exc:
            errors.append(f"--window: {exc}")
    if args.tz_offset is not None:
        over["tz_offset_minutes"] = args.tz_offset
    if getattr(args, "response", None) and args.command == "report":
        over["responses"] = (ResponseKind(args.response),)
    if args.jobs is not None and args.jobs < 1:
        errors.append("--jobs: must be >= 1")
    if errors:
        raise ConfigError("invalid arguments", errors)
    over["out"] = resolve_out(cfg, args.out)
    return cfg.with_overrides(**over)


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config_from_args(args)
        opts = RunOptions(jobs=args.jobs, skip_bad_assets=args.skip_bad_assets, svg=args.svg)
        if args.command == "ingest":
            bundle = cmd_ingest(cfg, opts)
        elif args.command == "stats":
            bundle = cmd_stats(cfg, opts)
        elif args.command == "corr":
            bundle = cmd_corr(cfg, opts)
        elif args.command == "candles":
            bundle = cmd_candles(cfg, args.target, opts)
        elif args.command == "seasonality":
            bundle = cmd_seasonality(cfg, args.response, opts)
        else:
            bundle = cmd_report(cfg, opts)
    except HFSeasonError as exc:
        err = {"error": type(exc).__name__, "message": exc.message, "details": exc.details,
               "exit_code": exc.exit_code}
        print(json.dumps(err), file=sys.stderr)
        return exc.exit_code
    for sym, why in sorted(bundle.skipped.items()):
        print(json.dumps({"skipped": sym, "reason": why}), file=sys.stderr)
    print(bundle.run_dir / "manifest.json")
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
