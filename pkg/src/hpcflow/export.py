"""Plain-text field files with a JSON companion.

Layout of a field file::

    # name <name>
    # t <time>
    # nx nz <nx> <nz>
    # centering <node|cell>
    <nz rows of nx whitespace-separated values, 17 significant digits>
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .compare import FieldSnapshot
from .errors import HpcflowError


class ExportError(HpcflowError, OSError):
    pass


def _fmt(v: float) -> str:
    return "%.17g" % v


def export_field(snap: FieldSnapshot, path) -> Path:
    """Write ``snap`` to ``path`` and its metadata to ``path`` + ``.json``."""
    path = Path(path)
    lines = [
        f"# name {snap.name}",
        f"# t {_fmt(snap.t)}",
        f"# nx nz {snap.nx} {snap.nz}",
        f"# centering {snap.centering}",
    ]
    lines.extend(" ".join(_fmt(v) for v in row) for row in snap.values)
    meta = {
        "name": snap.name,
        "t": snap.t,
        "nx": snap.nx,
        "nz": snap.nz,
        "centering": snap.centering,
        "x": [float(v) for v in snap.x],
        "z": [float(v) for v in snap.z],
        **{k: _jsonable(v) for k, v in snap.meta.items()},
    }
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(lines) + "\n")
        meta_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise ExportError(f"cannot write field file {path}: {exc}") from exc
    return path


def meta_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def read_field(path) -> FieldSnapshot:
    """Inverse of :func:`export_field`; coordinates come from the companion file when present."""
    path = Path(path)
    try:
        text = path.read_text().splitlines()
    except OSError as exc:
        raise ExportError(f"cannot read field file {path}: {exc}") from exc
    if len(text) < 4 or not all(line.startswith("# ") for line in text[:4]):
        raise ExportError(f"{path}: missing the four header lines")
    name = text[0][len("# name "):]
    t = float(text[1].split()[2])
    nx, nz = (int(v) for v in text[2].split()[3:5])
    centering = text[3].split()[2]
    rows = [line.split() for line in text[4:] if line.strip()]
    values = np.array(rows, dtype=float).reshape(nz, nx) if rows else np.zeros((nz, nx))
    mp = meta_path(path)
    if mp.exists():
        meta = json.loads(mp.read_text())
        x, z = np.array(meta.pop("x")), np.array(meta.pop("z"))
        for key in ("name", "t", "nx", "nz", "centering"):
            meta.pop(key, None)
    else:
        meta = {}
        x = np.arange(nx) / nx
        z = np.arange(1, nz + 1) / nz
    return FieldSnapshot(name, t, values, x, z, centering, meta)


def export_lineout(path, name: str, t: float, x_used: float, z, values) -> Path:
    """Two-column z/value table for one column of a field."""
    path = Path(path)
    lines = [f"# name {name}", f"# t {_fmt(t)}", f"# x {_fmt(x_used)}", "# z value"]
    lines.extend(f"{_fmt(a)} {_fmt(b)}" for a, b in zip(z, values))
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise ExportError(f"cannot write lineout {path}: {exc}") from exc
    return path


def write_json(path, payload) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise ExportError(f"cannot write {path}: {exc}") from exc
    return path


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, float) and not np.isfinite(v):
        return str(v)
    return v
