"""Plain-text matrix exchange format and small key-value helpers.

A matrix file is a header line ``rows cols`` followed by the entries in
row-major order, one row per line, each written with 17 significant digits
so that a write/read round trip is exact for IEEE doubles.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

_FMT = "%.17g"


def write_matrix(path: str | os.PathLike, A) -> None:
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    if A.ndim != 2:
        raise ValueError(f"expected a 2-D array, got shape {A.shape}")
    rows, cols = A.shape
    with open(path, "w") as fh:
        fh.write(f"{rows} {cols}\n")
        if rows and cols:
            np.savetxt(fh, A, fmt=_FMT, delimiter=" ")


def read_matrix(path: str | os.PathLike) -> np.ndarray:
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}: bad header {header!r}")
        rows, cols = int(header[0]), int(header[1])
        if rows < 0 or cols < 0:
            raise ValueError(f"{path}: negative dimensions")
        vals = np.array(fh.read().split(), dtype=float)
    if vals.size != rows * cols:
        raise ValueError(f"{path}: expected {rows * cols} values, found {vals.size}")
    return vals.reshape(rows, cols)


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return _FMT % v
    if isinstance(v, (list, tuple, np.ndarray)):
        return ",".join(format_value(x) for x in v)
    if v is None:
        return ""
    return str(v)


def write_keyvalue(path: str | os.PathLike, items: dict) -> None:
    """``key = value`` lines, one per entry, in insertion order."""
    with open(path, "w") as fh:
        for k, v in items.items():
            fh.write(f"{k} = {format_value(v)}\n")


def read_keyvalue(path: str | os.PathLike) -> dict[str, str]:
    out: dict[str, str] = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise ValueError(f"{path}: malformed line {line!r}")
        out[key.strip()] = val.strip()
    return out
