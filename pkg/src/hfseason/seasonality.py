"""Time-of-day and day-of-week seasonality fitted as an additive spline model."""

from __future__ import annotations

import csv
import enum
import io
import json
from dataclasses import asdict, dataclass, field


import numpy as np

from hfseason.errors import DataError
from hfseason.gam import (
    PenalizedDesign,
    cubic_regression_basis,
    predict_with_bands,
    pspline_basis,
    select_lambda,
)
from hfseason.gam.basis import quantile_knots
from hfseason.ingest import MS_PER_DAY, parse_interval

DAY_NAMES = ("Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun")
DAILY = "daily"
WEEKLY = "weekly"


class ResponseKind(str, enum.Enum):
    ABS_RETURN = "abs_return"
    VOLATILITY = "volatility"
    VOLUME = "volume"


@dataclass
class SeasonCovariates:
    """Per-observation calendar covariates in the display timezone.

    ``day_of_week`` runs 1..7 with Monday = 1; ``local_day`` counts days
    since 1970-01-01 (local calendar).
    """

    time_of_day_bin: np.ndarray
    day_of_week: np.ndarray
    local_day: np.ndarray
    interval_ms: int
    tz_offset_minutes: int

    def __len__(self) -> int:
        return len(self.time_of_day_bin)

    @property
    def bins_per_day(self) -> int:
        return MS_PER_DAY // self.interval_ms


def encode_covariates(timestamps_ms, interval=300_000, tz_offset_minutes: int = 60) -> SeasonCovariates:
    ts = np.asarray(timestamps_ms, dtype=np.int64)
    interval_ms = parse_interval(interval)
    if MS_PER_DAY % interval_ms:
        raise DataError("interval must divide one day")
    if np.any(ts % interval_ms):
        raise DataError("timestamp off the interval grid")
    local = ts + int(tz_offset_minutes) * 60_000
    day = local // MS_PER_DAY
    tod = (local - day * MS_PER_DAY) // interval_ms
    dow = (day + 3) % 7 + 1  # 1970-01-01 was a Thursday
    return SeasonCovariates(tod.astype(np.int64), dow.astype(np.int64), day.astype(np.int64),
                            interval_ms, int(tz_offset_minutes))


@dataclass(frozen=True)
class SeasonConfig:
    """Basis settings for the seasonality model.

    ``daily_covariate`` is ``"time_of_day"`` (bins within the day) or
    ``"calendar_day"`` (one value per sample date; knots then default to
    the number of distinct dates).
    """

    daily_knots: int = 24
    daily_cyclic: bool = False
    daily_covariate: str = "time_of_day"
    weekly_k: int = 7
    weekly_degree: int = 3
    weekly_penalty_order: int = 2
    log10_lambda_min: float = -6.0
    log10_lambda_max: float = 6.0
    lambda_points: int = 25
    band_multiplier: float = 2.0

    def __post_init__(self) -> None:
        if self.daily_covariate not in ("time_of_day", "calendar_day"):
            raise ValueError(f"unknown daily covariate {self.daily_covariate!r}")


@dataclass
class Curve:
    x: np.ndarray
    effect: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def to_dict(self) -> dict:
        return {k: [float(v) for v in getattr(self, k)] for k in ("x", "effect", "lower", "upper")}


@dataclass
class SeasonalProfile:
    response_kind: str
    daily: Curve
    weekly: Curve
    fit_summary: dict
    interval_ms: int = 300_000
    tz_offset_minutes: int = 60
    daily_covariate: str = "time_of_day"
    asset: str = ""

    def local_times(self) -> list[str]:
        if self.daily_covariate != "time_of_day":
            return ["" for _ in self.daily.x]
        out = []
        for b in self.daily.x:
            minutes = int(b) * self.interval_ms // 60_000
            out.append(f"{minutes // 60:02d}:{minutes % 60:02d}")
        return out

    def to_dict(self) -> dict:
        return {
            "asset": self.asset,
            "response_kind": self.response_kind,
            "interval_ms": self.interval_ms,
            "tz_offset_minutes": self.tz_offset_minutes,
            "daily_covariate": self.daily_covariate,
            "fit_summary": self.fit_summary,
            "daily": self.daily.to_dict(),
            "weekly": self.weekly.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "SeasonalProfile":
        def curve(c):
            return Curve(*(np.array(c[k], dtype=float) for k in ("x", "effect", "lower", "upper")))

        return cls(d["response_kind"], curve(d["daily"]), curve(d["weekly"]), d["fit_summary"],
                   int(d["interval_ms"]), int(d["tz_offset_minutes"]), d["daily_covariate"],
                   d["asset"])

    def daily_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["bin", "local_time", "effect", "lower", "upper"])
        for b, lt, e, lo, hi in zip(self.daily.x, self.local_times(), self.daily.effect,
                                    self.daily.lower, self.daily.upper):
            w.writerow([int(b), lt, repr(float(e)), repr(float(lo)), repr(float(hi))])
        return buf.getvalue()

    def weekly_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["day", "effect", "lower", "upper"])
        for d, e, lo, hi in zip(self.weekly.x, self.weekly.effect, self.weekly.lower,
                                self.weekly.upper):
            w.writerow([int(d), repr(float(e)), repr(float(lo)), repr(float(hi))])
        return buf.getvalue()


def _flat(x: np.ndarray) -> Curve:
    z = np.zeros(len(x))
    return Curve(x.astype(float), z, z.copy(), z.copy())


def fit_seasonality(
    response,
    covariates: SeasonCovariates,
    config: SeasonConfig | None = None,
    response_kind: ResponseKind | str = ResponseKind.ABS_RETURN,
    asset: str = "",
) -> SeasonalProfile:
    """Fit ``y = b0 + f_daily + f_weekly + e`` with GCV-selected smoothing.

    The daily smooth is a cubic regression spline, the weekly smooth a
    P-spline on day-of-week 1..7. Both are constrained to sum to zero over
    their reporting grids (all bins of the day; the seven weekdays), so the
    curves are directly comparable across assets.

    A constant response yields flat curves and R^2 = 0.
    """
    config = config or SeasonConfig()
    kind = ResponseKind(response_kind).value
    y = np.asarray(response, dtype=float).ravel()
    if len(y) != len(covariates):
        raise DataError(f"response length {len(y)} != covariate length {len(covariates)}")
    if not np.all(np.isfinite(y)):
        raise DataError("response contains non-finite values")

    if config.daily_covariate == "time_of_day":
        xd = covariates.time_of_day_bin.astype(float)
        daily_grid = np.arange(covariates.bins_per_day, dtype=float)
        if config.daily_cyclic:
            knots = np.linspace(0.0, covariates.bins_per_day, config.daily_knots + 1)
        else:
            knots = quantile_knots(xd, config.daily_knots)
            daily_grid = daily_grid[(daily_grid >= knots[0]) & (daily_grid <= knots[-1])]
    else:
        first = int(covariates.local_day.min())
        xd = (covariates.local_day - first).astype(float)
        daily_grid = np.unique(xd)
        knots = quantile_knots(xd, min(config.daily_knots, len(daily_grid)))
    weekly_grid = np.arange(1, 8, dtype=float)
    k_daily = len(knots) - 1 if config.daily_cyclic else len(knots)
    need = 10 * (k_daily + config.weekly_k)
    if len(y) < need:
        raise DataError(f"insufficient data: {len(y)} observations, need >= {need}")

    summary = {"n": int(len(y)), "daily_knots": [float(v) for v in knots],
               "daily_cyclic": bool(config.daily_cyclic), "weekly_k": config.weekly_k}
    if np.all(y == y[0]):
        summary.update(intercept=float(y[0]), edf_total=1.0, edf={DAILY: 0.0, WEEKLY: 0.0},
                       gcv=0.0, r_squared=0.0, lambdas={DAILY: None, WEEKLY: None},
                       degenerate=True)
        return SeasonalProfile(kind, _flat(daily_grid), _flat(weekly_grid), summary,
                               covariates.interval_ms, covariates.tz_offset_minutes,
                               config.daily_covariate, asset)

    daily = cubic_regression_basis(xd, knots, cyclic=config.daily_cyclic, name=DAILY,
                                   center_x=daily_grid)
    weekly = pspline_basis(covariates.day_of_week.astype(float), config.weekly_k,
                           degree=config.weekly_degree, penalty_order=config.weekly_penalty_order,
                           name=WEEKLY, xl=1.0, xr=7.0, center_x=weekly_grid)
    design = PenalizedDesign(y, [daily, weekly])
    search = select_lambda(y, design.terms, (config.log10_lambda_min, config.log10_lambda_max),
                           config.lambda_points, design=design)
    fit = search.fit
    d = predict_with_bands(fit, DAILY, daily_grid, config.band_multiplier)
    w = predict_with_bands(fit, WEEKLY, weekly_grid, config.band_multiplier)
    summary.update(intercept=fit.intercept, edf_total=fit.edf_total, edf=dict(fit.edf),
                   gcv=fit.gcv, r_squared=fit.r_squared, lambdas=dict(fit.lambdas),
                   scale=fit.scale, degenerate=False)
    return SeasonalProfile(kind, Curve(daily_grid, *d), Curve(weekly_grid, *w), summary,
                           covariates.interval_ms, covariates.tz_offset_minutes,
                           config.daily_covariate, asset)


@dataclass
class QualitativeReport:
    weekend_trough: bool
    evening_peak: bool
    night_low: bool
    peak_time: str
    low_time: str
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def _in_window(minute: int, window: tuple[int, int]) -> bool:
    lo, hi = window
    if lo <= hi:
        return lo <= minute <= hi
    return minute >= lo or minute <= hi


def qualitative_checks(
    profile: SeasonalProfile,
    evening_window: tuple[int, int] = (17 * 60, 20 * 60),
    night_window: tuple[int, int] = (0, 6 * 60),
) -> QualitativeReport:
    """Descriptive flags for the daily and weekly curves.

    Windows are in local minutes after midnight, inclusive. A flag is only
    raised when the contrast behind it exceeds the band width at the points
    involved; otherwise the curve counts as having no significant pattern.
    """
    d, w = profile.daily, profile.weekly
    width_d = d.upper - d.lower
    i_max, i_min = int(np.argmax(d.effect)), int(np.argmin(d.effect))
    daily_sig = (d.effect[i_max] - d.effect[i_min]) > 0.5 * (width_d[i_max] + width_d[i_min])
    step_min = profile.interval_ms // 60_000
    peak_min, low_min = int(d.x[i_max]) * step_min, int(d.x[i_min]) * step_min
    time_of_day = profile.daily_covariate == "time_of_day"

    weekend = np.isin(w.x, (6, 7))
    contrast = float(w.effect[~weekend].mean() - w.effect[weekend].mean())
    weekly_sig = contrast > float(np.mean(w.upper - w.lower))

    notes = []
    if not daily_sig:
        notes.append("daily curve: no significant pattern")
    if not weekly_sig:
        notes.append("weekly curve: no significant pattern")
    fmt = (lambda m: f"{m // 60:02d}:{m % 60:02d}") if time_of_day else (lambda m: "")
    return QualitativeReport(
        weekend_trough=bool(weekly_sig),
        evening_peak=bool(daily_sig and time_of_day and _in_window(peak_min, evening_window)),
        night_low=bool(daily_sig and time_of_day and _in_window(low_min, night_window)),
        peak_time=fmt(peak_min),
        low_time=fmt(low_min),
        notes=notes,
    )


def response_series(kind: ResponseKind | str, returns, grid) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(timestamps, response, gap_filled) for a response kind.

    Absolute returns use simple returns, volatility absolute log returns
    (both stamped at the later bar); volume uses every bar.
    """
    kind = ResponseKind(kind)
    if kind is ResponseKind.VOLUME:
        return grid.open_time, grid.volume, grid.gap_filled
    values = np.abs(returns.simple) if kind is ResponseKind.ABS_RETURN else returns.abs_log
    return returns.timestamps, values, returns.gap_filled


