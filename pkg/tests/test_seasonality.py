import json
from datetime import datetime, timedelta, timezone

import numpy as np
import pytest

from hfseason.errors import DataError
from hfseason.seasonality import (
    Curve,
    SeasonalProfile,
    SeasonConfig,
    encode_covariates,
    fit_seasonality,
    qualitative_checks,
)
from hfseason.synthetic import diurnal_sine, seasonal_panel

MIN5 = 300_000
WEEK = 7 * 86_400_000


def ms(s):
    return int(datetime.fromisoformat(s).timestamp() * 1000)


def test_encode_known_instants():
    c = encode_covariates([ms("2018-07-02T00:00:00+00:00"), ms("2018-07-01T23:30:00+00:00")], MIN5, 60)
    assert c.time_of_day_bin.tolist() == [12, 6]
    assert c.day_of_week.tolist() == [1, 1]
    assert c.bins_per_day == 288


def test_encode_matches_calendar_oracle():
    rng = np.random.default_rng(1)
    ts = rng.integers(0, 2_000_000_000_000 // MIN5, 10_000) * MIN5
    for tz in (60, -330, 0):
        c = encode_covariates(ts, MIN5, tz)
        for t, b, d in zip(ts[:2000], c.time_of_day_bin, c.day_of_week):
            local = datetime.fromtimestamp(int(t) / 1000, timezone(timedelta(minutes=tz)))
            assert b == (local.hour * 60 + local.minute) // 5
            assert d == local.isoweekday()


def test_encode_off_grid():
    with pytest.raises(DataError, match="off the interval grid"):
        encode_covariates([MIN5 + 1], MIN5)


def test_recovers_daily_peak_with_flat_week():
    ts, y = seasonal_panel(days=62, amplitude=1.0, weekend_level=0.0, noise=0.05, seed=3)
    prof = fit_seasonality(y, encode_covariates(ts, MIN5, 60))
    assert abs(int(prof.daily.x[np.argmax(prof.daily.effect)]) - 216) <= 2
    assert np.max(np.abs(prof.weekly.effect)) < 0.05
    assert len(prof.daily.x) == 288 and len(prof.weekly.x) == 7
    assert abs(prof.daily.effect.sum()) < 1e-6 and abs(prof.weekly.effect.sum()) < 1e-6
    q = qualitative_checks(prof)
    # trough lands at 06:00, the inclusive edge of the night window
    assert q.evening_peak and q.peak_time == "18:00" and q.low_time == "06:00" and q.night_low


def test_recovers_weekend_step_with_flat_day():
    ts, y = seasonal_panel(days=62, amplitude=0.0, weekend_level=-1.0, noise=0.05, seed=4)
    prof = fit_seasonality(y, encode_covariates(ts, MIN5, 60))
    w = prof.weekly.effect
    assert w[5:].max() <= w[:5].min() - 0.8
    assert np.ptp(prof.daily.effect) < 0.05
    q = qualitative_checks(prof)
    assert q.weekend_trough and not q.evening_peak


def test_constant_response_is_flat():
    ts, _ = seasonal_panel(days=14)
    prof = fit_seasonality(np.full(len(ts), 2.5), encode_covariates(ts, MIN5, 60))
    assert prof.fit_summary["r_squared"] == 0.0
    assert not prof.daily.effect.any() and not prof.weekly.effect.any()
    q = qualitative_checks(prof)
    assert not (q.weekend_trough or q.evening_peak or q.night_low)
    assert any("no significant pattern" in n for n in q.notes)


def test_insufficient_data():
    ts, y = seasonal_panel(days=1)
    with pytest.raises(DataError, match="insufficient data"):
        fit_seasonality(y[:200], encode_covariates(ts[:200], MIN5, 60))
    with pytest.raises(DataError, match="length"):
        fit_seasonality(y[:-1], encode_covariates(ts, MIN5, 60))


def test_week_shift_is_bitwise_invariant():
    ts, y = seasonal_panel(days=21, seed=5)
    a = fit_seasonality(y, encode_covariates(ts, MIN5, 60))
    b = fit_seasonality(y, encode_covariates(ts + WEEK, MIN5, 60))
    assert a.to_json() == b.to_json()
    assert fit_seasonality(y, encode_covariates(ts, MIN5, 60)).to_json() == a.to_json()


def test_tz_change_rotates_daily_curve():
    # noiseless, cyclic spline with one knot per hour, whole weeks of data
    ts, _ = seasonal_panel(days=14, noise=0.0)
    y = diurnal_sine(ts, 0, peak_minute=9 * 60)
    cfg = SeasonConfig(daily_cyclic=True, daily_knots=24)
    a = fit_seasonality(y, encode_covariates(ts, MIN5, 60), cfg)
    b = fit_seasonality(y, encode_covariates(ts, MIN5, 120), cfg)
    assert np.max(np.abs(np.roll(a.daily.effect, 12) - b.daily.effect)) < 1e-6


def test_calendar_day_covariate():
    ts, y = seasonal_panel(days=21, seed=6)
    prof = fit_seasonality(y, encode_covariates(ts, MIN5, 60), SeasonConfig(daily_covariate="calendar_day"))
    assert len(prof.daily.x) == 21
    assert prof.local_times()[0] == ""


def test_profile_serialization_roundtrip():
    ts, y = seasonal_panel(days=14, seed=8)
    prof = fit_seasonality(y, encode_covariates(ts, MIN5, 60), asset="BTC")
    back = SeasonalProfile.from_dict(json.loads(prof.to_json()))
    assert back.to_json() == prof.to_json()
    assert back.daily_csv() == prof.daily_csv() and back.weekly_csv() == prof.weekly_csv()
    lines = prof.daily_csv().splitlines()
    assert lines[0] == "bin,local_time,effect,lower,upper" and lines[1].startswith("0,00:00,")
    assert prof.weekly_csv().splitlines()[0] == "day,effect,lower,upper"


def test_band_overlap_suppresses_flags():
    x = np.arange(288, dtype=float)
    eff = 0.01 * np.cos(2 * np.pi * (x - 216) / 288)
    wide = Curve(x, eff, eff - 1, eff + 1)
    week = Curve(np.arange(1, 8.0), np.array([0.1] * 5 + [-0.25] * 2), np.zeros(7) - 5, np.zeros(7) + 5)
    q = qualitative_checks(SeasonalProfile("volume", wide, week, {}))
    assert not (q.evening_peak or q.weekend_trough or q.night_low)
    tight = Curve(x, eff, eff - 1e-4, eff + 1e-4)
    week_t = Curve(week.x, week.effect, week.effect - 0.01, week.effect + 0.01)
    q = qualitative_checks(SeasonalProfile("volume", tight, week_t, {}))
    assert q.evening_peak and q.weekend_trough and q.night_low
    shifted = Curve(x, np.roll(eff, 12), tight.lower, tight.upper)
    assert not qualitative_checks(SeasonalProfile("volume", shifted, week_t, {})).night_low
