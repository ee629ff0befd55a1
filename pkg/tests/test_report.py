import json
import re
import xml.etree.ElementTree as ET
from datetime import date

import numpy as np
import pytest

from hfseason.errors import DataError
from hfseason.ingest import GridSeries
from hfseason.pipeline import render_rows_csv, _season_summary_rows
from hfseason.report import (
    ReportBundle,
    build_corr_tables,
    build_table1,
    corr_from_json,
    corr_table,
    render_corr_csv,
    render_svg,
    render_table1_csv,
    run_id_for,
    table1_from_json,
    verify_manifest,
)
from hfseason.report import series as sr
from hfseason.report.figures import data_to_svg_coords, seasonal_limits
from hfseason.seasonality import Curve, SeasonalProfile, encode_covariates, fit_seasonality, qualitative_checks
from hfseason.stats import DOWN, UP, CorrelationMatrix, RegimeLabels, SummaryStats, density_curve
from hfseason.synthetic import seasonal_panel
from hfseason.timeseries import ReturnSeries

MIN5 = 300_000
# symbols of the eleven-asset summary table, deliberately shuffled
ELEVEN = ["XRP", "BTC", "ZEC", "ETH", "BCH", "LTC", "STR", "DASH", "XMR", "REP", "ETC"]
SVG_NS = {"s": "http://www.w3.org/2000/svg"}


def stats(asset, **kw):
    base = dict(n=17856, rho1_ret=-0.0412, rho1_ret_sq=0.2149, rho1_abs_ret=0.3051, skewness=1.3049,
                excess_kurtosis=49.4412, jb_stat=1823779.8012, jb_pvalue=0.0)
    base.update(kw)
    return SummaryStats(asset, **base)


def test_table1_single_row_formatting():
    t = build_table1([stats("BTC")])
    assert t.csv == ("asset,rho1_ret,rho1_ret_sq,rho1_abs_ret,skewness,excess_kurtosis,jb_stat,jb_pvalue\n"
                     "BTC,-0.04,0.21,0.31,1.30,49.44,1823779.80,0.00\n")


def test_table1_eleven_rows_alphabetical_and_roundtrip():
    rng = np.random.default_rng(0)
    rows = [stats(a, skewness=float(rng.normal()), jb_stat=float(rng.uniform(1e4, 1e6))) for a in ELEVEN]
    t = build_table1(rows)
    body = [line.split(",")[0] for line in t.csv.splitlines()[1:]]
    assert body == sorted(ELEVEN) and body[0] == "BCH" and body[-1] == "ZEC"
    back = table1_from_json(t.json)
    assert back == sorted(rows, key=lambda r: r.asset)
    assert render_table1_csv(back) == t.csv


def corr(assets, values, regime=UP):
    return CorrelationMatrix(list(assets), np.asarray(values, float), regime, 100)


def test_corr_cell_symmetry_and_blank_diagonal():
    m = corr(["BCH", "BTC"], [[1, 0.5], [0.5, 1]])
    lines = corr_table(m).csv.splitlines()
    assert lines == ["UP,BCH,BTC", "BCH,,0.50", "BTC,0.50,"]


def test_random_corr_table_symmetric_under_transpose():
    rng = np.random.default_rng(4)
    X = rng.standard_normal((200, 6))
    m = corr("ABCDEF", np.corrcoef(X.T))
    m.values = (m.values + m.values.T) / 2
    cells = [line.split(",")[1:] for line in render_corr_csv(m).splitlines()[1:]]
    assert cells == [list(r) for r in zip(*cells)]
    back = corr_from_json(corr_table(m).json)
    assert np.array_equal(back.values, m.values) and back.sample_count == 100
    assert render_corr_csv(back) == render_corr_csv(m)


def test_corr_asset_mismatch():
    up = corr(["A", "B"], np.eye(2))
    down = corr(["A", "C"], np.eye(2), DOWN)
    with pytest.raises(DataError, match="different assets"):
        build_corr_tables(up, down)
    with pytest.raises(DataError, match="not symmetric"):
        corr_table(corr(["A", "B"], [[1, 0.2], [0.3, 1]]))


def two_bars():
    return GridSeries("BTC", 3_600_000, np.array([0, 3_600_000], dtype=np.int64),
                      np.array([10.0, 11.0]), np.array([12.0, 11.5]), np.array([9.0, 9.5]),
                      np.array([11.0, 10.0]), np.array([1.0, 2.0]), np.zeros(2, bool))


def test_two_bars_two_candles_and_determinism():
    a = render_svg("candles", two_bars())
    assert len(re.findall(r'id="candle-\d+"', a)) == 2
    assert render_svg("candles", two_bars()) == a
    ET.fromstring(a)  # well-formed


def _band_vertices(svg):
    root = ET.fromstring(svg)
    band = root.find(".//s:g[@id='band']", SVG_NS)
    d = band.find(".//s:path", SVG_NS).get("d")
    use = band.find(".//s:use", SVG_NS)
    dx, dy = float(use.get("x")), float(use.get("y"))
    pts = re.findall(r"[ML] (-?[\d.]+) (-?[\d.]+)", d)
    return np.array([(float(x) + dx, float(y) + dy) for x, y in pts])


def test_band_polygon_matches_affine_map():
    x = np.arange(1, 8.0)
    e = np.sin(x)
    lo, hi = e - 0.3 - 0.05 * x, e + 0.2 + 0.02 * x
    daily = Curve(np.arange(288.0), np.zeros(288), -np.ones(288), np.ones(288))
    prof = SeasonalProfile("volume", daily, Curve(x, e, lo, hi), {}, asset="BTC")
    verts = _band_vertices(render_svg("seasonal_weekly", prof))
    xlim, ylim = seasonal_limits(x, lo, hi)
    px, plo = data_to_svg_coords(x, lo, xlim, ylim)
    _, phi = data_to_svg_coords(x, hi, xlim, ylim)
    for i in range(len(x)):
        at = verts[np.abs(verts[:, 0] - px[i]) < 0.5]
        ys = set(np.round(at[:, 1], 3))
        assert min(abs(y - plo[i]) for y in ys) < 0.5
        assert min(abs(y - phi[i]) for y in ys) < 0.5
        assert max(at[:, 1]) <= plo[i] + 0.5 and min(at[:, 1]) >= phi[i] - 0.5


def test_empty_data_errors():
    with pytest.raises(DataError):
        render_svg("candles", two_bars().take(np.zeros(2, bool)))
    with pytest.raises(DataError):
        render_svg("line", {"timestamps": [], "values": []})
    with pytest.raises(DataError):
        render_svg("density", {"curves": []})
    with pytest.raises(ValueError):
        render_svg("pie", {})


def test_other_figures_render():
    rng = np.random.default_rng(1)
    x = rng.standard_normal(2000) * 1e-3
    svg = render_svg("density", {"curves": [density_curve(x)], "title": "t"})
    assert 'id="reference-normal"' in svg
    ts = MIN5 * np.arange(50, dtype=np.int64)
    assert 'id="series"' in render_svg("line", {"timestamps": ts, "values": np.cos(ts / 1e6)})


def test_series_twins_reproduce_csv():
    g = two_bars()
    assert sr.grid_csv(sr.grid_from_json(sr.grid_json(g))) == sr.grid_csv(g)
    rs = ReturnSeries.from_grid(g)
    assert sr.returns_from_json(sr.returns_json(rs)).to_csv() == rs.to_csv()
    rng = np.random.default_rng(2)
    curves = [density_curve(rng.standard_normal(500)), density_curve(rng.standard_normal(300))]
    assert sr.density_csv(sr.density_from_json(sr.density_json(curves))) == sr.density_csv(curves)
    labels = RegimeLabels([date(2018, 7, 1), date(2018, 7, 2)], [UP, DOWN], np.array([0.1, -1 / 3]), 60)
    assert sr.regimes_csv(sr.regimes_from_json(sr.regimes_json(labels))) == sr.regimes_csv(labels)
    assert sr.regimes_csv(labels).splitlines()[1] == "2018-07-01,0.1,UP"


def test_seasonal_summary_twin():
    ts, y = seasonal_panel(days=14, seed=9)
    p = fit_seasonality(y, encode_covariates(ts, MIN5, 60), asset="BTC")
    csv_text, json_text = _season_summary_rows([(p, qualitative_checks(p).to_dict())])
    assert render_rows_csv(json_text) == csv_text


def test_bundle_manifest_and_verification(tmp_path):
    params = {"command": "x", "interval_ms": MIN5}
    rid = run_id_for(params, {"A": "00"})
    assert rid == run_id_for(dict(reversed(list(params.items()))), {"A": "00"})
    assert rid != run_id_for(params, {"A": "01"})
    b = ReportBundle(tmp_path, rid, params, {"A": "00"})
    b.write("table", "", "tables/t.csv", "a,b\n")
    b.write("series", "A", "series/a.json", b"{}")
    with pytest.raises(ValueError):
        b.write("table", "", "tables/t.csv", "again")
    with pytest.raises(ValueError):
        b.write("table", "", "elsewhere/t.csv", "x")
    path = b.finalize()
    m = json.loads(path.read_text())
    assert [a["path"] for a in m["artifacts"]] == ["series/a.json", "tables/t.csv"]
    assert m["schema_version"] == "1" and m["run_id"] == rid
    assert verify_manifest(path) == []
    (b.run_dir / "tables/t.csv").write_text("tampered")
    (b.run_dir / "series/a.json").unlink()
    assert sorted(verify_manifest(path)) == ["digest mismatch: tables/t.csv", "missing: series/a.json"]
