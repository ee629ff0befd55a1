"""Publication-style tables with full-precision JSON twins.

The CSV form carries two-decimal display values; the JSON twin carries
the underlying floats and re-renders to the identical CSV.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from hfseason.errors import DataError
from hfseason.stats import CorrelationMatrix, SummaryStats

TABLE1_COLUMNS = ("asset", "rho1_ret", "rho1_ret_sq", "rho1_abs_ret", "skewness",
                  "excess_kurtosis", "jb_stat", "jb_pvalue")


@dataclass(frozen=True)
class TableArtifact:
    name: str
    csv: str
    json: str


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def render_table1_csv(rows: Sequence[SummaryStats]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TABLE1_COLUMNS)
    for s in sorted(rows, key=lambda r: r.asset):
        w.writerow([s.asset] + [_fmt(getattr(s, c)) for c in TABLE1_COLUMNS[1:]])
    return buf.getvalue()


def build_table1(stats: Sequence[SummaryStats]) -> TableArtifact:
    """Summary-statistics table, one row per asset in alphabetical order."""
    rows = sorted(stats, key=lambda r: r.asset)
    payload = {"table": "summary_statistics", "columns": list(TABLE1_COLUMNS),
               "rows": [r.to_dict() for r in rows]}
    return TableArtifact("table1", render_table1_csv(rows), json.dumps(payload, indent=2))


def table1_from_json(text: str) -> list[SummaryStats]:
    return [SummaryStats.from_dict(r) for r in json.loads(text)["rows"]]


def render_corr_csv(m: CorrelationMatrix) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([m.regime] + list(m.assets))
    for i, a in enumerate(m.assets):
        w.writerow([a] + ["" if i == j else _fmt(m.values[i, j]) for j in range(len(m.assets))])
    return buf.getvalue()


def corr_table(m: CorrelationMatrix) -> TableArtifact:
    if not np.array_equal(m.values, m.values.T):
        raise DataError(f"{m.regime} correlation matrix is not symmetric")
    return TableArtifact(f"corr_{m.regime.lower()}", render_corr_csv(m),
                         json.dumps(m.to_dict(), indent=2))


def build_corr_tables(up: CorrelationMatrix, down: CorrelationMatrix) -> tuple[TableArtifact, TableArtifact]:
    if list(up.assets) != list(down.assets):
        raise DataError("UP and DOWN correlation matrices cover different assets",
                        [f"UP: {up.assets}", f"DOWN: {down.assets}"])
    return corr_table(up), corr_table(down)


def corr_from_json(text: str) -> CorrelationMatrix:
    return CorrelationMatrix.from_dict(json.loads(text))
