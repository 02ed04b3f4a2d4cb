"""Atomic result-file writers. Floats are written with 17 significant digits."""

from __future__ import annotations

import hashlib
import json
import math
import os
import platform
import tempfile
from pathlib import Path

import numpy as np


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def atomic_write_text(path, text: str) -> Path:
    """Write to a temporary file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    return path


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _sanitize(obj):
    # JSON has no NaN/inf; they become null.
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _sanitize(obj.tolist())
    if isinstance(obj, np.floating):
        return _sanitize(float(obj))
    return obj


def to_json(obj, indent: int | None = 1) -> str:
    return json.dumps(_sanitize(obj), indent=indent, default=_json_default)


def write_json(path, obj, indent: int | None = 1) -> Path:
    return atomic_write_text(path, to_json(obj, indent) + "\n")


def write_csv(path, header: list[str], rows) -> Path:
    lines = [",".join(header)]
    lines.extend(",".join(fmt(v) for v in row) for row in rows)
    return atomic_write_text(path, "\n".join(lines) + "\n")


def write_trajectory_csv(path, traj: np.ndarray) -> Path:
    """``traj`` of shape ``(steps + 1, 2n)`` as ``step, z0, ..., z{2n-1}`` rows."""
    traj = np.atleast_2d(traj)
    header = ["step"] + [f"z{i}" for i in range(traj.shape[1])]
    return write_csv(path, header, ([k, *row] for k, row in enumerate(traj)))


def config_hash(config: dict) -> str:
    blob = json.dumps(_sanitize(config), sort_keys=True, separators=(",", ":"), default=_json_default)
    return hashlib.sha256(blob.encode()).hexdigest()


def versions() -> dict:
    import numba

    from . import __version__

    return {
        "symgyro": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "numba": numba.__version__,
    }
