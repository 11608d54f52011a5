"""Deterministic, atomic output files and run manifests."""

from __future__ import annotations

import hashlib
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

MANIFEST = "manifest.json"


def fmt(x) -> str:
    return f"{float(x):.17g}"


def atomic_write_bytes(path, data: bytes) -> None:
    """Write via a temporary file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def write_csv(path, header, rows) -> None:
    """CSV with ``\\n`` line endings; floats rendered with 17 significant digits."""
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        cells = []
        for v in row:
            if isinstance(v, (float, np.floating)):
                cells.append(fmt(v))
            else:
                cells.append(str(v))
        buf.write(",".join(cells) + "\n")
    atomic_write_text(path, buf.getvalue())


def write_json(path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_radiomap_csv(path, points, values) -> None:
    """Header ``x,y,z,re,im,abs``; one row per point in the given order."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    vals = np.asarray(values, dtype=complex).ravel()
    if pts.shape[0] != vals.size:
        raise ValueError("points and values differ in length")
    rows = ((p[0], p[1], p[2], v.real, v.imag, abs(v)) for p, v in zip(pts, vals))
    write_csv(path, ["x", "y", "z", "re", "im", "abs"], rows)


def read_radiomap_csv(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, :3], data[:, 3] + 1j * data[:, 4]


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir, command: str, config: dict, seed: int, outputs) -> dict:
    """Snapshot of the resolved run; no timestamps so reruns compare equal."""
    out_dir = Path(out_dir)
    manifest = {
        "command": command,
        "config": config,
        "seed": int(seed),
        "out": str(out_dir),
        "outputs": {name: sha256_file(out_dir / name) for name in sorted(outputs)},
    }
    write_json(out_dir / MANIFEST, manifest)
    return manifest
