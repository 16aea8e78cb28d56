"""Self-describing CSV output and JSON run metadata."""

from __future__ import annotations

import csv
import json
import math
import os
import platform
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

__all__ = ["RunManifest", "write_csv", "read_manifest", "write_metadata", "default_output_dir", "OUTDIR_ENV"]

OUTDIR_ENV = "STUDENTRMT_OUTDIR"


@dataclass
class RunManifest:
    """What produced an output file.

    ``command``, ``config``, ``seed`` and ``version`` go into the CSV header
    and determine the file content. ``timing`` is wall-clock information and
    only goes into the JSON sidecar, so identical runs give identical CSVs.
    """

    command: str
    config: dict
    seed: int | None
    version: str
    timing: dict = field(default_factory=dict)

    def header_lines(self) -> list[str]:
        body = {"command": self.command, "config": self.config, "seed": self.seed, "version": self.version}
        return ["# studentrmt run manifest", "# " + json.dumps(body, sort_keys=True, default=_jsonable)]


def _jsonable(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, Path):
        return str(x)
    return str(x)


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return repr(x) if math.isfinite(x) else str(x)
    return str(x)


def write_csv(path, columns: dict, manifest: RunManifest, notes: list[str] | None = None) -> Path:
    """Write equal-length ``columns`` under a ``#`` manifest header."""
    path = Path(path)
    names = list(columns)
    data = [np.asarray(columns[n]) if not isinstance(columns[n], list) else columns[n] for n in names]
    n = len(data[0]) if data else 0
    if any(len(d) != n for d in data):
        raise ValueError("columns have different lengths")
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        for line in manifest.header_lines():
            fh.write(line + "\n")
        for note in notes or []:
            fh.write("# " + note + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for i in range(n):
            w.writerow([_fmt(d[i]) for d in data])
    return path


def read_manifest(path) -> dict:
    """Manifest stored in the header of a file written by :func:`write_csv`."""
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            text = line[1:].strip()
            if text.startswith("{"):
                return json.loads(text)
    raise ValueError(f"{path} has no manifest header")


def write_metadata(path, manifest: RunManifest, extra: dict | None = None) -> Path:
    """JSON sidecar with the manifest, timing and any run diagnostics."""
    path = Path(path)
    doc = asdict(manifest)
    doc["python"] = platform.python_version()
    doc["numpy"] = np.__version__
    if extra:
        doc.update(extra)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")
    return path


def default_output_dir() -> Path:
    return Path(os.environ.get(OUTDIR_ENV, "."))
