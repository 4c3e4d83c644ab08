"""
On-disk artifacts: CSV tables, JSON summaries and the run manifest.

Floats are written with repr() in both CSV and JSON so the two formats carry
the same doubles. Every CSV starts with a `# manifest: <digest>` line pointing
at the manifest.json written next to it.

"""

import csv
import datetime
import hashlib
import json
import logging
import os
import subprocess
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np

log = logging.getLogger(__name__)

MANIFEST_FILE = "manifest.json"


def tool_version() -> str:
    try:
        from importlib.metadata import version

        return version("mfou")
    except Exception:
        return "0.1.0"


def git_stamp() -> str:
    try:
        out = subprocess.run(
            ["git", "rev-parse", "--short", "HEAD"],
            capture_output=True,
            text=True,
            timeout=5,
        )
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def _plain(value):
    """numpy scalars/arrays to JSON-native values"""
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


@dataclass
class RunManifest:
    command: str
    params: Dict[str, Any]
    seed: Optional[int] = None
    kernel_hash: Optional[str] = None
    version: str = field(default_factory=tool_version)
    git: str = field(default_factory=git_stamp)
    timestamp: str = field(
        default_factory=lambda: datetime.datetime.now().isoformat(timespec="seconds")
    )

    def digest(self) -> str:
        """Content hash of everything except the timestamp"""
        payload = asdict(self)
        payload.pop("timestamp")
        text = json.dumps(_plain(payload), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def save(self, out_dir: str) -> str:
        os.makedirs(out_dir, exist_ok=True)
        path = os.path.join(out_dir, MANIFEST_FILE)
        payload = _plain(asdict(self))
        payload["digest"] = self.digest()
        with open(path, "w", encoding="utf-8") as f:
            json.dump(payload, f, indent=2)
        return path


def format_value(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def write_csv(
    path: str,
    header: Sequence[str],
    rows: Iterable[Sequence],
    manifest: Optional[RunManifest] = None,
) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        if manifest is not None:
            f.write(f"# manifest: {manifest.digest()}\n")
        f.write(",".join(header) + "\n")
        for row in rows:
            if len(row) != len(header):
                raise ValueError(f"row has {len(row)} fields, header has {len(header)}")
            f.write(",".join(format_value(v) for v in row) + "\n")
    log.info(f"Saved {path}")
    return path


def read_csv(path: str) -> List[Dict[str, str]]:
    """Rows as dicts; `#` comment lines are skipped"""
    with open(path, "r", encoding="utf-8") as f:
        lines = [line for line in f if not line.startswith("#")]
    return list(csv.DictReader(lines))


def read_csv_columns(path: str, columns: Sequence[str]) -> Dict[str, np.ndarray]:
    rows = read_csv(path)
    if rows:
        missing = [c for c in columns if c not in rows[0]]
        if missing:
            raise KeyError(f"{path} lacks columns {missing}")
    return {c: np.array([float(r[c]) for r in rows]) for c in columns}


def csv_manifest_digest(path: str) -> Optional[str]:
    with open(path, "r", encoding="utf-8") as f:
        first = f.readline().strip()
    prefix = "# manifest: "
    return first[len(prefix) :] if first.startswith(prefix) else None


def write_json(path: str, payload: Dict[str, Any], manifest: Optional[RunManifest] = None) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    payload = dict(_plain(payload))
    if manifest is not None:
        payload["manifest"] = manifest.digest()
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2)
    log.info(f"Saved {path}")
    return path


def read_json(path: str) -> Dict[str, Any]:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def write_table(
    out_dir: str,
    name: str,
    header: Sequence[str],
    rows: List[Sequence],
    fmt: str = "csv",
    manifest: Optional[RunManifest] = None,
) -> str:
    """Table as <name>.csv or <name>.json (list of records)"""
    if fmt == "csv":
        return write_csv(os.path.join(out_dir, f"{name}.csv"), header, rows, manifest)
    if fmt == "json":
        records = [dict(zip(header, _plain(list(row)))) for row in rows]
        return write_json(os.path.join(out_dir, f"{name}.json"), {"rows": records}, manifest)
    raise ValueError(f"unknown format {fmt!r}, expected csv or json")
