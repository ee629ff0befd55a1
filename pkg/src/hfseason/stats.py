"""Distributional summaries, regime labels and regime-conditional correlations."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from datetime import date, timedelta
from typing import Mapping, Sequence

import numpy as np

from hfseason.errors import DataError
from hfseason.ingest import MS_PER_DAY, GridSeries
from hfseason.timeseries import ReturnSeries

UP = "UP"
DOWN = "DOWN"
ALL = "ALL"
_EPOCH_DATE = date(1970, 1, 1)


def _as_array(x, min_len: int) -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    if len(x) < min_len:
        raise DataError(f"series too short: need at least {min_len} values, got {len(x)}")
    if not np.all(np.isfinite(x)):
        raise DataError("series contains non-finite values")
    return x


def acf_lag1(x) -> float:
    """First-order sample autocorrelation with the full-sample denominator."""
    x = _as_array(x, 3)
    d = x - x.mean()
    denom = float(np.dot(d, d))
    if denom == 0.0:
        raise DataError("degenerate series: zero variance")
    return float(np.dot(d[1:], d[:-1]) / denom)


def moments(x) -> tuple[float, float, float, float]:
    """Mean, standard deviation, skewness and excess kurtosis.

    Central moments use the 1/n (maximum-likelihood) convention and the
    returned sd is ``sqrt(m2)`` under the same convention.
    """
    x = _as_array(x, 4)
    mean = float(x.mean())
    d = x - mean
    m2 = float(np.mean(d * d))
    if m2 == 0.0:
        raise DataError("degenerate series: zero variance")
    m3 = float(np.mean(d ** 3))
    m4 = float(np.mean(d ** 4))
    return mean, math.sqrt(m2), m3 / m2 ** 1.5, m4 / (m2 * m2) - 3.0


def jb_from_moments(n: int, skewness: float, excess_kurtosis: float) -> float:
    return n * (skewness ** 2 / 6.0 + excess_kurtosis ** 2 / 24.0)


def chi2_2_sf(stat: float) -> float:
    """Survival function of chi-square with two degrees of freedom."""
    return math.exp(-0.5 * stat) if stat > 0 else 1.0


def jarque_bera(x) -> tuple[float, float]:
    x = _as_array(x, 4)
    _, _, skew, ekurt = moments(x)
    jb = jb_from_moments(len(x), skew, ekurt)
    return jb, chi2_2_sf(jb)


@dataclass(frozen=True)
class SummaryStats:
    asset: str
    n: int
    rho1_ret: float
    rho1_ret_sq: float
    rho1_abs_ret: float
    skewness: float
    excess_kurtosis: float
    jb_stat: float
    jb_pvalue: float

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "SummaryStats":
        return cls(asset=str(d["asset"]), n=int(d["n"]),
                   **{k: float(d[k]) for k in cls.__dataclass_fields__ if k not in ("asset", "n")})


def summary_stats(asset: str, log_rets) -> SummaryStats:
    """One summary row for a log-return series."""
    r = _as_array(log_rets, 4)
    _, _, skew, ekurt = moments(r)
    jb = jb_from_moments(len(r), skew, ekurt)
    return SummaryStats(asset, len(r), acf_lag1(r), acf_lag1(r * r), acf_lag1(np.abs(r)), skew,
                        ekurt, jb, chi2_2_sf(jb))


def local_day(ts_ms: np.ndarray, tz_offset_minutes: int) -> np.ndarray:
    """Days since 1970-01-01 of each timestamp in the display timezone."""
    return (np.asarray(ts_ms, dtype=np.int64) + tz_offset_minutes * 60_000) // MS_PER_DAY


def day_to_date(day: int) -> date:
    return _EPOCH_DATE + timedelta(days=int(day))


def date_to_day(d: date) -> int:
    return (d - _EPOCH_DATE).days


@dataclass
class RegimeLabels:
    """UP/DOWN label per display-timezone calendar date."""

    dates: list[date]
    labels: list[str]
    daily_returns: np.ndarray
    tz_offset_minutes: int = 60

    def __post_init__(self) -> None:
        if len(self.dates) != len(self.labels):
            raise ValueError("dates and labels differ in length")
        self._by_day = {date_to_day(d): lab for d, lab in zip(self.dates, self.labels)}

    def label_of(self, d: date) -> str:
        return self._by_day[date_to_day(d)]

    def labels_for(self, ts_ms: np.ndarray) -> np.ndarray:
        """Label per timestamp; unlabeled dates raise."""
        days = local_day(ts_ms, self.tz_offset_minutes)
        out = np.empty(len(days), dtype=object)
        missing = set()
        for i, d in enumerate(days):
            lab = self._by_day.get(int(d))
            if lab is None:
                missing.add(int(d))
            out[i] = lab
        if missing:
            raise DataError("returns fall on unlabeled dates",
                            [day_to_date(d).isoformat() for d in sorted(missing)])
        return out

    def count(self, label: str) -> int:
        return sum(1 for lab in self.labels if lab == label)


def regime_labels(
    index_series: GridSeries,
    tz_offset_minutes: int | None = None,
    window: tuple[date, date] | None = None,
    zero_label: str = DOWN,
) -> RegimeLabels:
    """Label each calendar date by the sign of the index's daily return.

    A date's return compounds the bar-to-bar returns stamped on that date:
    from the last close before the date to the last close within it.
    Zero-return dates get ``zero_label``.
    """
    if zero_label not in (UP, DOWN):
        raise ValueError("zero_label must be UP or DOWN")
    tz = index_series.timezone_offset if tz_offset_minutes is None else tz_offset_minutes
    if len(index_series) < 2:
        raise DataError("index series needs at least two bars")
    close = index_series.close
    days = local_day(index_series.open_time[1:], tz)
    starts = np.flatnonzero(np.r_[True, days[1:] != days[:-1]])
    ends = np.r_[starts[1:], len(days)] - 1
    uniq = days[starts]
    daily = close[ends + 1] / close[starts] - 1.0

    if window is not None:
        lo, hi = date_to_day(window[0]), date_to_day(window[1])
        keep = (uniq >= lo) & (uniq <= hi)
        uniq, daily = uniq[keep], daily[keep]
    else:
        lo, hi = int(uniq[0]), int(uniq[-1])
    missing = sorted(set(range(lo, hi + 1)) - set(int(d) for d in uniq))
    if missing:
        raise DataError("index series does not cover every date in the window",
                        [day_to_date(d).isoformat() for d in missing])
    labels = [UP if r > 0 else (DOWN if r < 0 else zero_label) for r in daily]
    return RegimeLabels([day_to_date(d) for d in uniq], labels, daily, tz)


@dataclass
class CorrelationMatrix:
    assets: list[str]
    values: np.ndarray
    regime: str
    sample_count: int

    def get(self, a: str, b: str) -> float:
        return float(self.values[self.assets.index(a), self.assets.index(b)])

    def to_dict(self) -> dict:
        return {"regime": self.regime, "sample_count": self.sample_count, "assets": self.assets,
                "values": [[float(v) for v in row] for row in self.values]}

    @classmethod
    def from_dict(cls, d: Mapping) -> "CorrelationMatrix":
        return cls(list(d["assets"]), np.array(d["values"], dtype=float), d["regime"],
                   int(d["sample_count"]))


def pearson_matrix(X: np.ndarray) -> np.ndarray:
    """Column correlations by two-pass centering; symmetric with unit diagonal."""
    X = np.asarray(X, dtype=float)
    D = X - X.mean(axis=0)
    ss = np.einsum("ij,ij->j", D, D)
    if np.any(ss == 0):
        raise DataError("degenerate series: zero variance in correlation input")
    p = X.shape[1]
    out = np.eye(p)
    for i in range(p):
        for j in range(i + 1, p):
            out[i, j] = out[j, i] = np.dot(D[:, i], D[:, j]) / math.sqrt(ss[i] * ss[j])
    return out


def conditional_correlation(
    returns_by_asset: Mapping[str, ReturnSeries],
    labels: RegimeLabels | None,
    regime: str = ALL,
    exclude_gap_filled: bool = False,
) -> CorrelationMatrix:
    """Pearson correlation of pooled bar log returns on dates of one regime."""
    if regime not in (UP, DOWN, ALL):
        raise ValueError(f"unknown regime {regime!r}")
    assets = sorted(returns_by_asset)
    if len(assets) < 2:
        raise DataError("need at least two assets for a correlation matrix")
    ref = returns_by_asset[assets[0]].timestamps
    for a in assets[1:]:
        ts = returns_by_asset[a].timestamps
        if len(ts) != len(ref) or not np.array_equal(ts, ref):
            raise DataError(f"misaligned grids: {a} vs {assets[0]}")
    mask = np.ones(len(ref), dtype=bool)
    if regime != ALL:
        if labels is None:
            raise ValueError("regime labels required for UP/DOWN")
        mask &= labels.labels_for(ref) == regime
    if exclude_gap_filled:
        for a in assets:
            mask &= ~returns_by_asset[a].gap_filled
    count = int(mask.sum())
    if count < 2:
        raise DataError(f"empty regime: {count} observation(s) labeled {regime}")
    X = np.column_stack([returns_by_asset[a].log[mask] for a in assets])
    return CorrelationMatrix(assets, pearson_matrix(X), regime, count)


@dataclass
class DensityCurve:
    grid: np.ndarray
    density: np.ndarray
    bandwidth: float
    reference_normal: tuple[float, float]
    asset: str = ""

    def integral(self) -> float:
        return float(np.trapezoid(self.density, self.grid))


def silverman_bandwidth(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    sd = float(np.std(x, ddof=1))
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34) if q75 > q25 else sd
    return 0.9 * spread * len(x) ** (-0.2)


def gaussian_kde(x: np.ndarray, grid: np.ndarray, bandwidth: float, chunk: int = 16) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.empty(len(grid))
    norm = 1.0 / (len(x) * bandwidth * math.sqrt(2 * math.pi))
    for i in range(0, len(grid), chunk):
        z = (grid[i:i + chunk, None] - x[None, :]) / bandwidth
        out[i:i + chunk] = np.exp(-0.5 * z * z).sum(axis=1) * norm
    return out


def density_curve(
    x,
    reference=None,
    grid_size: int = 512,
    bandwidth: float | None = None,
    asset: str = "",
) -> DensityCurve:
    """Gaussian kernel density of ``x`` with a normal overlay fitted to ``reference``.

    The bandwidth defaults to Silverman's rule. The overlay takes the mean
    and sample sd (ddof=1) of ``reference`` (of ``x`` when omitted).
    """
    x = _as_array(x, 10)
    if np.std(x) == 0:
        raise DataError("degenerate series: all values equal")
    h = silverman_bandwidth(x) if bandwidth is None else float(bandwidth)
    if not h > 0:
        raise DataError("degenerate bandwidth")
    grid = np.linspace(x.min() - 3 * h, x.max() + 3 * h, grid_size)
    ref = x if reference is None else _as_array(reference, 2)
    return DensityCurve(grid, gaussian_kde(x, grid, h), h,
                        (float(ref.mean()), float(np.std(ref, ddof=1))), asset)


def normal_pdf(x: np.ndarray, mean: float, sd: float) -> np.ndarray:
    z = (np.asarray(x, dtype=float) - mean) / sd
    return np.exp(-0.5 * z * z) / (sd * math.sqrt(2 * math.pi))


def summary_table(returns: Sequence[ReturnSeries], exclude_gap_filled: bool = False) -> list[SummaryStats]:
    rows = []
    for rs in returns:
        r = rs.observed() if exclude_gap_filled else rs
        rows.append(summary_stats(rs.asset, r.log))
    return sorted(rows, key=lambda s: s.asset)
