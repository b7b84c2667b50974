"""Grid and report writers.

Every float is written with 17 significant digits so that reruns can be
compared byte for byte, and every file goes through a temporary sibling that
is renamed into place, so a failed run never leaves a partial file.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import InvalidArgument
from .phasespace import GridSpec, RealGrid

__all__ = ["fmt", "dumps_json", "atomic_write", "grid_to_csv", "grid_to_json", "grid_to_ppm", "write_grid", "read_grid_csv"]


def fmt(x: float) -> str:
    x = float(x)
    if not math.isfinite(x):
        raise InvalidArgument("refusing to serialize a non-finite number")
    return format(x, ".17g")


def _json_value(obj, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, bool) or obj is None or isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_json_value(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        if all(isinstance(v, (int, float, np.number)) and not isinstance(v, bool) for v in seq):
            return "[" + ", ".join(_json_value(v, indent, level) for v in seq) + "]"
        items = [pad + _json_value(v, indent, level + 1) for v in seq]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise InvalidArgument(f"cannot serialize {type(obj).__name__}")


def dumps_json(obj, indent: int = 2) -> str:
    """Deterministic JSON with 17-digit floats and keys in insertion order."""
    return _json_value(obj, indent, 0) + "\n"


def atomic_write(path, data: bytes | str) -> Path:
    path = Path(path)
    if isinstance(data, str):
        data = data.encode()
    directory = path.parent if str(path.parent) else Path(".")
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=directory)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def grid_to_csv(grid: RealGrid) -> str:
    """Header ``# x_min,x_max,y_min,y_max,nx,ny,label`` filled with this grid's
    values, then one row per y (ascending) with the nx values along x."""
    s = grid.spec
    head = "# " + ",".join(
        [fmt(s.x_min), fmt(s.x_max), fmt(s.y_min), fmt(s.y_max), str(s.nx), str(s.ny), grid.axis_label]
    )
    rows = [",".join(fmt(v) for v in grid.values[:, j]) for j in range(s.ny)]
    return "\n".join([head, *rows]) + "\n"


def read_grid_csv(text: str) -> RealGrid:
    lines = text.strip().splitlines()
    if not lines or not lines[0].startswith("#"):
        raise InvalidArgument("missing grid header")
    f = lines[0][1:].strip().split(",")
    spec = GridSpec(float(f[0]), float(f[1]), float(f[2]), float(f[3]), int(f[4]), int(f[5]))
    vals = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    return RealGrid(spec, vals.T, f[6])


def grid_to_json(grid: RealGrid, extra: dict | None = None) -> str:
    s = grid.spec
    obj = {
        "spec": {"x_min": s.x_min, "x_max": s.x_max, "y_min": s.y_min, "y_max": s.y_max, "nx": s.nx, "ny": s.ny},
        "axis_label": grid.axis_label,
        "values": [list(row) for row in grid.values],
    }
    if extra:
        obj.update(extra)
    return dumps_json(obj)


def grid_to_ppm(grid: RealGrid) -> bytes:
    """Binary P6 image, y increasing upwards, grey level linear on ``[0, max]``.
    Negative values clip to black."""
    v = grid.values
    top = float(v.max())
    scaled = np.zeros_like(v) if top <= 0 else np.clip(v / top, 0.0, 1.0)
    grey = np.rint(scaled * 255).astype(np.uint8).T[::-1]  # rows = y descending
    rgb = np.repeat(grey[:, :, None], 3, axis=2)
    head = f"P6\n{grid.spec.nx} {grid.spec.ny}\n255\n".encode()
    return head + rgb.tobytes()


def write_grid(grid: RealGrid, path, fmt_name: str = "csv") -> Path:
    if fmt_name == "csv":
        return atomic_write(path, grid_to_csv(grid))
    if fmt_name == "json":
        return atomic_write(path, grid_to_json(grid))
    if fmt_name == "ppm":
        return atomic_write(path, grid_to_ppm(grid))
    raise InvalidArgument(f"unknown format {fmt_name!r}")
