"""Deterministic CSV / JSON writers and run manifests."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class RunManifest:
    command: str
    source: list
    seed: int | None = None
    n_runs: int | None = None
    outputs: list = field(default_factory=list)
    tool_version: str = __version__
    options: dict = field(default_factory=dict)

    def to_dict(self, timestamp: bool = False) -> dict:
        d = asdict(self)
        if timestamp:
            d["timestamp"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
        return d


def clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def to_json(payload: dict, manifest: RunManifest) -> str:
    doc = {"schema_version": SCHEMA_VERSION, "manifest": manifest.to_dict(), **payload}
    return json.dumps(clean(doc), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def to_csv(columns: list[str], rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(row[c]) for c in columns])
    return buf.getvalue()


def manifest_path(out: str | Path) -> Path:
    out = Path(out)
    return out.with_name(out.name + ".manifest.json")


def write_output(text: str, out: str | None, manifest: RunManifest, stdout) -> None:
    """Write ``text`` to ``out`` (plus a timestamped manifest) or to stdout."""
    if out is None:
        stdout.write(text)
        return
    Path(out).write_text(text, encoding="utf-8")
    side = json.dumps(clean(manifest.to_dict(timestamp=True)), indent=2, sort_keys=True) + "\n"
    manifest_path(out).write_text(side, encoding="utf-8")
