"""
manifest.py — Run manifest & checksums
---------------------------------------

Every command leaves a `manifest.json` next to its outputs (command, config hash, seed
list, package versions and one `FileEntry` per output file) plus a `checksums.sha256`
listing in the usual `<hex digest>  <name>` layout, so a run directory can be verified
or reproduced later.
"""

import hashlib
import platform
import re
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from pydantic import BaseModel

from tools.errors import ManifestError

MANIFEST_NAME = "manifest.json"
CHECKSUMS_NAME = "checksums.sha256"
TRACKED_PACKAGES = ("torch", "numpy", "scikit-learn", "scipy", "pandas", "pydantic")
DIGEST_PATTERN = re.compile(r"[0-9a-f]{64}")


# ---------- Models ----------
class FileEntry(BaseModel):
    name: str
    size: Optional[int] = None
    sha256: Optional[str] = None


class RunManifest(BaseModel):
    command: str
    generated_at: str
    config_hash: str
    seeds: List[int]
    versions: Dict[str, str]
    files: List[FileEntry]
    extra: Dict[str, Any] = {}


# ---------- Helpers ----------
def sha256_file(path: Path, chunk_size: int = 1 << 20) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(chunk_size), b""):
            digest.update(chunk)
    return digest.hexdigest()


def package_versions() -> Dict[str, str]:
    versions = {"python": platform.python_version()}
    for name in TRACKED_PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "missing"
    return versions


def read_checksums(out_dir: Path) -> Dict[str, str]:
    """Name → digest map from the `<hex digest>  <name>` lines `write_manifest` emits."""
    path = Path(out_dir) / CHECKSUMS_NAME
    if not path.is_file():
        raise ManifestError(f"no {CHECKSUMS_NAME} in {out_dir}")
    out = {}
    for number, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        digest, sep, name = line.partition("  ")
        if not sep or not name or not DIGEST_PATTERN.fullmatch(digest):
            raise ManifestError(f"{CHECKSUMS_NAME} line {number} is malformed: {line!r}")
        out[name] = digest
    return out


def file_entries(out_dir: Path, files: Sequence[Path]) -> List[FileEntry]:
    entries = []
    for path in sorted({Path(f) for f in files}):
        entries.append(FileEntry(
            name=path.relative_to(out_dir).as_posix() if path.is_relative_to(out_dir) else path.name,
            size=path.stat().st_size,
            sha256=sha256_file(path),
        ))
    return entries


# ---------- Writing & verification ----------
def write_manifest(
    out_dir: Path,
    command: str,
    config_hash: str,
    seeds: Sequence[int],
    files: Sequence[Path],
    extra: Optional[Dict[str, Any]] = None,
) -> RunManifest:
    out_dir = Path(out_dir)
    manifest = RunManifest(
        command=command,
        generated_at=datetime.now(timezone.utc).isoformat(),
        config_hash=config_hash,
        seeds=list(seeds),
        versions=package_versions(),
        files=file_entries(out_dir, files),
        extra=extra or {},
    )
    (out_dir / MANIFEST_NAME).write_text(manifest.model_dump_json(indent=2))
    lines = [f"{entry.sha256}  {entry.name}" for entry in manifest.files]
    (out_dir / CHECKSUMS_NAME).write_text("".join(f"{line}\n" for line in lines))
    return manifest


def verify_checksums(out_dir: Path) -> List[str]:
    """Names of files whose current digest differs from checksums.sha256 (or that vanished)."""
    out_dir = Path(out_dir)
    expected = read_checksums(out_dir)
    bad = []
    for name, digest in expected.items():
        path = out_dir / name
        if not path.is_file() or sha256_file(path) != digest:
            bad.append(name)
    return bad
