"""Field dumps: a JSON header next to raw little-endian float64 node values (time slowest)."""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from .errors import FormatError
from .grid import ScalarField, make_grid

_DTYPE = np.dtype("<f8")
_KEYS = ("dim", "extents", "nx", "T", "nt", "gamma", "epsilon", "ordering")


def _paths(base):
    base = os.fspath(base)
    for ext in (".json", ".f64"):
        if base.endswith(ext):
            base = base[: -len(ext)]
    return Path(base + ".json"), Path(base + ".f64")


def write_field(base, field: ScalarField, gamma: float, epsilon: float | None) -> tuple[Path, Path]:
    """Write ``<base>.json`` and ``<base>.f64``; returns both paths."""
    jpath, fpath = _paths(base)
    g = field.grid
    header = {
        "dim": g.dim,
        "extents": [list(e) for e in g.extents],
        "nx": list(g.nx),
        "T": g.T,
        "nt": g.nt,
        "gamma": gamma,
        "epsilon": epsilon,
        "ordering": "t-slowest",
        "origin": list(g.origin),
    }
    jpath.write_text(json.dumps(header, indent=2) + "\n", encoding="utf-8")
    np.ascontiguousarray(field.values, dtype=_DTYPE).tofile(fpath)
    return jpath, fpath


def read_header(base) -> dict:
    jpath, _ = _paths(base)
    try:
        header = json.loads(jpath.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{jpath}: not valid JSON ({exc})") from None
    missing = [k for k in _KEYS if k not in header]
    if missing:
        raise FormatError(f"{jpath}: missing keys {missing}")
    if header["ordering"] != "t-slowest":
        raise FormatError(f"{jpath}: unsupported ordering {header['ordering']!r}")
    return header


def read_field(base) -> tuple[ScalarField, dict]:
    """Inverse of :func:`write_field`; the values round-trip bit for bit."""
    header = read_header(base)
    _, fpath = _paths(base)
    grid = make_grid(header["dim"], header["extents"], header["nx"], header["T"], header["nt"],
                     header.get("origin"))
    expected = grid.size * _DTYPE.itemsize
    actual = fpath.stat().st_size
    if actual != expected:
        raise FormatError(f"{fpath}: expected {expected} bytes for {grid.size} nodes, found {actual} bytes")
    values = np.fromfile(fpath, dtype=_DTYPE).astype(np.float64).reshape(grid.shape)
    return ScalarField(grid, values), header
