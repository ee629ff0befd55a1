"""Tables, figures and the run bundle."""

from hfseason.report.bundle import (
    SCHEMA_VERSION,
    Artifact,
    ReportBundle,
    load_manifest,
    run_id_for,
    sha256_bytes,
    sha256_file,
    verify_manifest,
)
from hfseason.report.figures import KINDS, data_to_svg_coords, render_svg
from hfseason.report.tables import (
    TABLE1_COLUMNS,
    TableArtifact,
    build_corr_tables,
    build_table1,
    corr_from_json,
    corr_table,
    render_corr_csv,
    render_table1_csv,
    table1_from_json,
)

__all__ = [
    "SCHEMA_VERSION", "Artifact", "ReportBundle", "load_manifest", "run_id_for", "sha256_bytes",
    "sha256_file", "verify_manifest", "KINDS", "data_to_svg_coords", "render_svg",
    "TABLE1_COLUMNS", "TableArtifact", "build_corr_tables", "build_table1", "corr_from_json",
    "corr_table", "render_corr_csv", "render_table1_csv", "table1_from_json",
]
