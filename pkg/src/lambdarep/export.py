"""CSV and manifest writers shared by the command-line tools."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import platform
from importlib import metadata
from pathlib import Path

import numpy as np


def fmt(x):
    """Deterministic shortest round-trip text for a number."""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def rows_to_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def matrix_to_csv(phi) -> str:
    """Representation dump with a header row of state indices.

    (S, A, S) tensors get one row per (state, action) pair.
    """
    phi = np.asarray(phi, dtype=float)
    n = phi.shape[-1]
    if phi.ndim == 2:
        header = ["state"] + [str(j) for j in range(n)]
        rows = ([i] + list(phi[i]) for i in range(phi.shape[0]))
    else:
        header = ["state", "action"] + [str(j) for j in range(n)]
        rows = ([i, a] + list(phi[i, a]) for i in range(phi.shape[0])
                for a in range(phi.shape[1]))
    return rows_to_csv(header, rows)


def residual_log_csv(residuals) -> str:
    return rows_to_csv(["iter", "max_residual"], enumerate(residuals, start=1))


def write_text(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


def config_hash(config) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=fmt)
    return hashlib.sha256(blob.encode()).hexdigest()


def versions():
    out = {"python": platform.python_version(), "numpy": np.__version__}
    try:
        out["artifact"] = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        out["artifact"] = "unknown"
    return out


def write_manifest(out_dir, command, argv, seed, config):
    manifest = {
        "command": command,
        "argv": list(argv),
        "seed": seed,
        "config": config,
        "config_hash": config_hash(config),
        "versions": versions(),
    }
    return write_text(Path(out_dir) / "manifest.json",
                      json.dumps(manifest, indent=2, sort_keys=True, default=fmt) + "\n")
