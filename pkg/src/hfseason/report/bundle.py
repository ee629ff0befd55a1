"""Run bundle: artifacts on disk plus a manifest of their digests."""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass, field
from pathlib import Path

from hfseason.errors import DataError

SCHEMA_VERSION = "1"
SUBDIRS = ("tables", "series", "seasonal", "svg")
MANIFEST = "manifest.json"


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def run_id_for(parameters: dict, input_digests: dict) -> str:
    """Content-derived run id: digest of the config snapshot and input digests."""
    blob = json.dumps({"parameters": parameters, "inputs": input_digests}, sort_keys=True,
                      separators=(",", ":"))
    return sha256_bytes(blob.encode("utf-8"))[:16]


@dataclass
class Artifact:
    kind: str
    asset: str
    path: str  # relative to the run directory, forward slashes
    sha256: str

    def to_dict(self) -> dict:
        return {"kind": self.kind, "asset": self.asset, "path": self.path, "sha256": self.sha256}


@dataclass
class ReportBundle:
    """Collects artifacts written under ``root`` and assembles the manifest.

    ``write`` may be called from several threads; the manifest is sorted by
    path so its bytes do not depend on completion order.
    """

    root: Path
    run_id: str
    parameters: dict
    inputs: dict = field(default_factory=dict)
    artifacts: list[Artifact] = field(default_factory=list)
    skipped: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.root = Path(self.root)
        self._lock = threading.Lock()

    @property
    def run_dir(self) -> Path:
        return self.root / self.run_id

    def write(self, kind: str, asset: str, relpath: str, content: str | bytes) -> Artifact:
        if relpath.split("/", 1)[0] not in SUBDIRS:
            raise ValueError(f"artifact path {relpath!r} outside {SUBDIRS}")
        data = content.encode("utf-8") if isinstance(content, str) else content
        art = Artifact(kind, asset, relpath, sha256_bytes(data))
        # claim the path before touching disk so a duplicate never clobbers it
        with self._lock:
            if any(a.path == relpath for a in self.artifacts):
                raise ValueError(f"artifact {relpath} written twice")
            self.artifacts.append(art)
        target = self.run_dir / relpath
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(data)
        return art

    def manifest(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "run_id": self.run_id,
            "parameters": self.parameters,
            "inputs": self.inputs,
            "artifacts": [a.to_dict() for a in sorted(self.artifacts, key=lambda a: a.path)],
            "skipped_assets": dict(sorted(self.skipped.items())),
        }

    def finalize(self) -> Path:
        path = self.run_dir / MANIFEST
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.manifest(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path


def verify_manifest(manifest_path: str | Path) -> list[str]:
    """Check every listed artifact exists with a matching digest.

    Returns the list of problems (empty when the bundle is intact).
    """
    manifest_path = Path(manifest_path)
    data = json.loads(manifest_path.read_text(encoding="utf-8"))
    if data.get("schema_version") != SCHEMA_VERSION:
        return [f"unsupported schema_version {data.get('schema_version')!r}"]
    problems = []
    for a in data["artifacts"]:
        p = manifest_path.parent / a["path"]
        if not p.is_file():
            problems.append(f"missing: {a['path']}")
        elif sha256_file(p) != a["sha256"]:
            problems.append(f"digest mismatch: {a['path']}")
    return problems


def load_manifest(path: str | Path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no manifest at {path}")
    return json.loads(path.read_text(encoding="utf-8"))
