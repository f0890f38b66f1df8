"""Line-oriented ``key = value`` config files and the run manifest.

Config values are parsed as int, float, bool, or comma-separated int lists,
falling back to strings. Command-line flags override file values. The
manifest records the fully resolved configuration, seed, and content hashes
of every input file, and is written before any training step; its own hash
is stamped as a comment line into every CSV the run emits.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DataError


def _parse_value(raw: str):
    raw = raw.strip()
    low = raw.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if low in ("none", "null", ""):
        return None
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    if "," in raw:
        parts = [p.strip() for p in raw.split(",")]
        try:
            return [int(p) for p in parts]
        except ValueError:
            return parts
    return raw


def parse_config_file(path: str | Path) -> dict:
    """Parse ``key = value`` lines; '#' starts a comment."""
    cfg: dict = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"{path}:{lineno}: expected 'key = value'")
        key, _, raw = line.partition("=")
        key = key.strip()
        if not key:
            raise DataError(f"{path}:{lineno}: empty key")
        cfg[key] = _parse_value(raw)
    return cfg


def resolve_config(defaults: dict, file_cfg: dict | None, overrides: dict | None) -> dict:
    """Materialize defaults, then apply file values, then flag overrides
    (flags win). Unknown file keys are rejected to catch typos."""
    out = dict(defaults)
    for src in (file_cfg or {},):
        unknown = set(src) - set(defaults)
        if unknown:
            raise DataError(f"unknown config keys: {sorted(unknown)}")
        out.update(src)
    for key, value in (overrides or {}).items():
        if value is not None:
            out[key] = value
    return out


def file_hash(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int
    input_hashes: dict[str, str] = field(default_factory=dict)
    outputs: list[str] = field(default_factory=list)

    def hash(self) -> str:
        payload = json.dumps(
            {
                "command": self.command,
                "config": self.config,
                "seed": self.seed,
                "input_hashes": self.input_hashes,
                "outputs": self.outputs,
            },
            sort_keys=True,
            default=str,
        )
        return hashlib.sha256(payload.encode()).hexdigest()

    def write(self, path: str | Path) -> str:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        doc = {
            "command": self.command,
            "config": self.config,
            "seed": self.seed,
            "input_hashes": self.input_hashes,
            "outputs": self.outputs,
            "manifest_hash": self.hash(),
        }
        path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n")
        return doc["manifest_hash"]


def write_csv(path: str | Path, rows: list[dict], manifest_hash: str, columns: list[str] | None = None) -> None:
    """CSV with a manifest-hash comment line followed by the header row."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if columns is None:
        columns = list(rows[0]) if rows else []
    with open(path, "w") as fh:
        fh.write(f"# manifest_hash={manifest_hash}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(row.get(c)) for c in columns) + "\n")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def read_csv(path: str | Path) -> tuple[str | None, list[dict]]:
    """Read back a CSV written by :func:`write_csv`."""
    lines = Path(path).read_text().splitlines()
    manifest_hash = None
    if lines and lines[0].startswith("# manifest_hash="):
        manifest_hash = lines[0].split("=", 1)[1]
        lines = lines[1:]
    if not lines:
        return manifest_hash, []
    header = lines[0].split(",")
    rows = [dict(zip(header, line.split(","))) for line in lines[1:] if line]
    return manifest_hash, rows
