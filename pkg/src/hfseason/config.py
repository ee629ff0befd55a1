"""Run configuration: a flat ``key = value`` file with flag overrides.

Example::

    # assets and the regime index
    asset.BTC = data/btc.csv
    asset.ETH = data/eth.csv
    index.CRIX = data/crix.csv
    interval = 5m
    window = 2018-07-01:2018-08-31
    tz_offset = 60

Relative paths resolve against the directory of the config file. Every
violated field is reported in one ConfigError.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields, replace
from datetime import date, datetime, timezone
from pathlib import Path

from hfseason.errors import ConfigError, HFSeasonError
from hfseason.ingest import MS_PER_DAY, GapPolicy, format_interval, parse_interval
from hfseason.seasonality import ResponseKind, SeasonConfig
from hfseason.stats import DOWN, UP

OUT_ENV = "HFSEASON_OUT"


@dataclass(frozen=True)
class RunConfig:
    assets: tuple[tuple[str, Path], ...]
    index: tuple[str, Path] | None = None
    interval_ms: int = 300_000
    window: tuple[date, date] | None = None
    tz_offset_minutes: int = 60
    gap_policy: GapPolicy = GapPolicy.FORWARD_FILL
    daily_knots: int = 24
    daily_cyclic: bool = False
    daily_covariate: str = "time_of_day"
    weekly_k: int = 7
    weekly_penalty_order: int = 2
    lambda_min: float = -6.0
    lambda_max: float = 6.0
    lambda_points: int = 25
    out: Path = Path("out")
    zero_label: str = DOWN
    max_row_errors: float = 0.001
    exclude_gap_filled: bool = False
    candle_interval_ms: int = 3_600_000
    density_reference: str | None = None
    responses: tuple[ResponseKind, ...] = (ResponseKind.VOLATILITY, ResponseKind.VOLUME)

    @property
    def symbols(self) -> list[str]:
        return [s for s, _ in self.assets]

    def season_config(self) -> SeasonConfig:
        return SeasonConfig(daily_knots=self.daily_knots, daily_cyclic=self.daily_cyclic,
                            daily_covariate=self.daily_covariate, weekly_k=self.weekly_k,
                            weekly_penalty_order=self.weekly_penalty_order,
                            log10_lambda_min=self.lambda_min, log10_lambda_max=self.lambda_max,
                            lambda_points=self.lambda_points)

    def window_ms(self) -> tuple[int, int] | None:
        """UTC [start, end) of the inclusive local-date window."""
        if self.window is None:
            return None
        off = self.tz_offset_minutes * 60_000
        start = _date_ms(self.window[0]) - off
        end = _date_ms(self.window[1]) + MS_PER_DAY - off
        return start, end

    def with_overrides(self, **kw) -> "RunConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return validate(replace(self, **kw)) if kw else self

    def snapshot(self) -> dict:
        """Parameters recorded in the manifest (no absolute paths, no output dir)."""
        return {
            "assets": {s: p.name for s, p in self.assets},
            "index": {self.index[0]: self.index[1].name} if self.index else None,
            "interval": format_interval(self.interval_ms),
            "window": _fmt_window(self.window),
            "tz_offset_minutes": self.tz_offset_minutes,
            "gap_policy": self.gap_policy.value,
            "daily_knots": self.daily_knots,
            "daily_cyclic": self.daily_cyclic,
            "daily_covariate": self.daily_covariate,
            "weekly_k": self.weekly_k,
            "weekly_penalty_order": self.weekly_penalty_order,
            "log10_lambda_grid": [self.lambda_min, self.lambda_max, self.lambda_points],
            "zero_label": self.zero_label,
            "max_row_errors": self.max_row_errors,
            "exclude_gap_filled": self.exclude_gap_filled,
            "candle_interval": format_interval(self.candle_interval_ms),
            "density_reference": self.density_reference,
            "responses": [r.value for r in self.responses],
        }


def _date_ms(d: date) -> int:
    return int(datetime(d.year, d.month, d.day, tzinfo=timezone.utc).timestamp() * 1000)


def _fmt_window(w) -> str | None:
    return None if w is None else f"{w[0].isoformat()}:{w[1].isoformat()}"


def parse_window(text: str) -> tuple[date, date]:
    try:
        a, b = text.split(":")
        return date.fromisoformat(a.strip()), date.fromisoformat(b.strip())
    except ValueError:
        raise ValueError(f"window must be START:END dates, got {text!r}") from None


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _field_parsers(base: Path):
    def path(v):
        p = Path(v)
        return p if p.is_absolute() else base / p

    return {
        "interval": ("interval_ms", parse_interval),
        "window": ("window", parse_window),
        "tz_offset": ("tz_offset_minutes", int),
        "gap_policy": ("gap_policy", GapPolicy),
        "daily_knots": ("daily_knots", int),
        "daily_cyclic": ("daily_cyclic", _parse_bool),
        "daily_covariate": ("daily_covariate", str),
        "weekly_k": ("weekly_k", int),
        "weekly_penalty_order": ("weekly_penalty_order", int),
        "lambda_min": ("lambda_min", float),
        "lambda_max": ("lambda_max", float),
        "lambda_points": ("lambda_points", int),
        "out": ("out", path),
        "zero_label": ("zero_label", lambda v: v.strip().upper()),
        "max_row_errors": ("max_row_errors", float),
        "exclude_gap_filled": ("exclude_gap_filled", _parse_bool),
        "candle_interval": ("candle_interval_ms", parse_interval),
        "density_reference": ("density_reference", str),
        "responses": ("responses",
                      lambda v: tuple(ResponseKind(s.strip()) for s in v.split(",") if s.strip())),
    }


def parse_config_text(text: str, base_dir: str | Path = ".") -> RunConfig:
    base = Path(base_dir)
    parsers = _field_parsers(base)
    errors: list[str] = []
    seen: set[str] = set()
    assets: list[tuple[str, Path]] = []
    indexes: list[tuple[str, Path]] = []
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: expected key = value")
            continue
        key, value = (s.strip() for s in line.split("=", 1))
        if key in seen:
            errors.append(f"line {lineno}: duplicate key {key!r}")
            continue
        seen.add(key)
        if key.startswith(("asset.", "index.")):
            kind, sym = key.split(".", 1)
            if not sym or not value:
                errors.append(f"line {lineno}: {kind} needs a symbol and a path")
                continue
            p = Path(value)
            (assets if kind == "asset" else indexes).append((sym, p if p.is_absolute() else base / p))
        elif key in parsers:
            name, conv = parsers[key]
            try:
                values[name] = conv(value)
            except (ValueError, TypeError, HFSeasonError) as exc:
                errors.append(f"{key}: {exc}")
        else:
            errors.append(f"line {lineno}: unknown key {key!r}")
    if len(indexes) > 1:
        errors.append("more than one index.* entry")
    cfg = RunConfig(assets=tuple(assets), index=indexes[0] if indexes else None, **values)
    errors += validation_errors(cfg)
    if errors:
        raise ConfigError("invalid configuration", errors)
    return cfg


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}", [str(exc)]) from None
    return parse_config_text(text, path.parent)


def validation_errors(cfg: RunConfig) -> list[str]:
    errs = []
    if not cfg.assets:
        errs.append("assets: at least one asset.SYMBOL = path is required")
    syms = cfg.symbols
    if len(set(syms)) != len(syms):
        errs.append("assets: duplicate symbol")
    if cfg.interval_ms <= 0 or MS_PER_DAY % cfg.interval_ms:
        errs.append(f"interval: {cfg.interval_ms} ms does not divide one day")
    if cfg.candle_interval_ms <= 0 or MS_PER_DAY % cfg.candle_interval_ms or (
        cfg.interval_ms > 0 and cfg.candle_interval_ms % cfg.interval_ms
    ):
        errs.append("candle_interval: must divide one day and be a multiple of interval")
    if cfg.window is not None and not cfg.window[0] < cfg.window[1]:
        errs.append("window: start must be before end")
    if not -14 * 60 <= cfg.tz_offset_minutes <= 14 * 60:
        errs.append("tz_offset: must be within +-840 minutes")
    if cfg.daily_knots < 3:
        errs.append("daily_knots: need at least 3")
    if cfg.daily_covariate not in ("time_of_day", "calendar_day"):
        errs.append("daily_covariate: must be time_of_day or calendar_day")
    if cfg.weekly_k < 5:
        errs.append("weekly_k: need at least 5 for a cubic P-spline")
    if not 0 <= cfg.weekly_penalty_order < cfg.weekly_k:
        errs.append("weekly_penalty_order: must be in [0, weekly_k)")
    if not cfg.lambda_min < cfg.lambda_max:
        errs.append("lambda_min/lambda_max: min must be below max")
    if cfg.lambda_points < 2:
        errs.append("lambda_points: need at least 2")
    if cfg.zero_label not in (UP, DOWN):
        errs.append("zero_label: must be UP or DOWN")
    if not 0 <= cfg.max_row_errors < 1:
        errs.append("max_row_errors: must be a fraction in [0, 1)")
    if cfg.density_reference is not None and cfg.density_reference not in syms:
        errs.append(f"density_reference: {cfg.density_reference!r} is not a configured asset")
    if not cfg.responses:
        errs.append("responses: at least one response kind")
    return errs


def validate(cfg: RunConfig) -> RunConfig:
    errs = validation_errors(cfg)
    if errs:
        raise ConfigError("invalid configuration", errs)
    return cfg


def resolve_out(cfg: RunConfig, flag: str | None = None) -> Path:
    """Output directory: flag, then the environment variable, then the config."""
    if flag:
        return Path(flag)
    env = os.environ.get(OUT_ENV)
    return Path(env) if env else cfg.out


def serialize_config(cfg: RunConfig) -> str:
    """Write a config file that parses back to an equal RunConfig.

    Paths are written as given (absolute paths stay absolute).
    """
    lines = [f"asset.{s} = {p}" for s, p in cfg.assets]
    if cfg.index:
        lines.append(f"index.{cfg.index[0]} = {cfg.index[1]}")
    vals = {
        "interval": format_interval(cfg.interval_ms),
        "window": _fmt_window(cfg.window),
        "tz_offset": cfg.tz_offset_minutes,
        "gap_policy": cfg.gap_policy.value,
        "daily_knots": cfg.daily_knots,
        "daily_cyclic": str(cfg.daily_cyclic).lower(),
        "daily_covariate": cfg.daily_covariate,
        "weekly_k": cfg.weekly_k,
        "weekly_penalty_order": cfg.weekly_penalty_order,
        "lambda_min": repr(cfg.lambda_min),
        "lambda_max": repr(cfg.lambda_max),
        "lambda_points": cfg.lambda_points,
        "out": cfg.out,
        "zero_label": cfg.zero_label,
        "max_row_errors": repr(cfg.max_row_errors),
        "exclude_gap_filled": str(cfg.exclude_gap_filled).lower(),
        "candle_interval": format_interval(cfg.candle_interval_ms),
        "density_reference": cfg.density_reference,
        "responses": ",".join(r.value for r in cfg.responses),
    }
    lines += [f"{k} = {v}" for k, v in vals.items() if v is not None]
    return "\n".join(lines) + "\n"


def config_fields() -> list[str]:
    return [f.name for f in fields(RunConfig)]
