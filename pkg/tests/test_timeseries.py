import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hfseason.errors import DataError
from hfseason.ingest import GapPolicy, GridSeries, build_grid, grid_to_csv, RawRecord
from hfseason.timeseries import ReturnSeries, aggregate_bars, log_returns, simple_returns

MIN5 = 300_000


def grid(closes, vols=None, filled=None, start=0):
    c = np.asarray(closes, dtype=float)
    n = len(c)
    o = np.r_[c[0], c[:-1]]
    return GridSeries("X", MIN5, start + MIN5 * np.arange(n, dtype=np.int64), o,
                      np.maximum(o, c) * 1.01, np.minimum(o, c) * 0.99, c,
                      np.ones(n) if vols is None else np.asarray(vols, float),
                      np.zeros(n, bool) if filled is None else np.asarray(filled, bool))


def test_returns_known_values():
    g = grid([100, 110, 99])
    assert simple_returns(g) == pytest.approx([0.1, -0.1])
    assert log_returns(g) == pytest.approx([np.log(1.1), np.log(0.9)])
    rs = ReturnSeries.from_grid(g)
    assert rs.timestamps.tolist() == [MIN5, 2 * MIN5]
    assert rs.abs_log == pytest.approx(np.abs(rs.log))


def test_returns_need_two_bars():
    with pytest.raises(DataError):
        simple_returns(grid([100]))


def test_gap_filled_returns_are_zero_and_flagged():
    rs = ReturnSeries.from_grid(grid([100, 100, 101], filled=[False, True, False]))
    assert rs.log[0] == 0 and rs.gap_filled.tolist() == [True, False]
    assert len(rs.observed()) == 1


def test_drop_policy_returns_skip_holes():
    from datetime import datetime, timedelta, timezone
    t0 = datetime(2018, 7, 1, tzinfo=timezone.utc)
    recs = [RawRecord(t0 + timedelta(seconds=s), p, 1) for s, p in ((0, 10), (300, 11), (900, 12))]
    g = build_grid(recs, "5m", GapPolicy.DROP)
    rs = ReturnSeries.from_grid(g)
    assert len(rs) == 1 and rs.simple[0] == pytest.approx(0.1)


def test_aggregate_hourly():
    g = grid(np.arange(1, 25, dtype=float), vols=np.arange(24, dtype=float))
    h = aggregate_bars(g, "60m")
    assert len(h) == 2
    assert h.open[0] == g.open[0] and h.close[0] == g.close[11]
    assert h.high[0] == g.high[:12].max() and h.low[1] == g.low[12:].min()
    assert h.volume.tolist() == [sum(range(12)), sum(range(12, 24))]


def test_aggregate_identity_and_bad_target():
    g = grid([1, 2, 3])
    assert grid_to_csv(aggregate_bars(g, "5m")) == grid_to_csv(g)
    with pytest.raises(DataError):
        aggregate_bars(g, "7m")


def test_aggregate_gap_flag_all_members():
    g = grid(np.ones(24), filled=[True] * 12 + [True] * 11 + [False])
    h = aggregate_bars(g, "1h")
    assert h.gap_filled.tolist() == [True, False]


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(1, 64), min_size=24, max_size=96), st.integers(0, 200))
def test_aggregation_associative(steps, vol_seed):
    # dyadic volumes keep the float sums exact, so equality can be bitwise
    rng = np.random.default_rng(vol_seed)
    closes = np.cumsum(np.asarray(steps, float))
    vols = rng.integers(0, 1 << 10, len(closes)) / 8.0
    g = grid(closes, vols=vols)
    direct = aggregate_bars(g, "60m")
    via = aggregate_bars(aggregate_bars(g, "15m"), "60m")
    assert grid_to_csv(direct) == grid_to_csv(via)
