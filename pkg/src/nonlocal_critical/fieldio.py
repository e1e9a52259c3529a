"""Flat binary fields and CSV tables with provenance headers.

Binary layout, little endian::

    8 bytes   magic b"RZFIELD1"
    int32     ndim
    int64     dims[ndim]
    float64   h
    float64   origin[ndim]
    float64   payload, prod(dims) values in C (row-major) order

CSV files start with ``#`` comment lines carrying the package version and
the resolved configuration, followed by a header row.
"""
from __future__ import annotations

import csv
import io
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"RZFIELD1"


@dataclass(frozen=True)
class StoredField:
    values: np.ndarray
    h: float
    origin: tuple[float, ...]

    @property
    def dims(self) -> tuple[int, ...]:
        return self.values.shape


def write_field(path, values: np.ndarray, h: float, origin) -> None:
    values = np.ascontiguousarray(values, dtype="<f8")
    origin = tuple(float(o) for o in origin)
    if len(origin) != values.ndim:
        raise ValueError("origin needs one entry per axis")
    head = MAGIC + struct.pack("<i", values.ndim)
    head += struct.pack(f"<{values.ndim}q", *values.shape)
    head += struct.pack(f"<d{values.ndim}d", float(h), *origin)
    Path(path).write_bytes(head + values.tobytes(order="C"))


def read_field(path) -> StoredField:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise ValueError(f"{path}: not a field file (bad magic)")
    (ndim,) = struct.unpack_from("<i", raw, 8)
    pos = 12
    dims = struct.unpack_from(f"<{ndim}q", raw, pos)
    pos += 8 * ndim
    h, *origin = struct.unpack_from(f"<d{ndim}d", raw, pos)
    pos += 8 * (ndim + 1)
    count = int(np.prod(dims))
    if len(raw) - pos != 8 * count:
        raise ValueError(f"{path}: payload holds {(len(raw) - pos) // 8} values, header says {count}")
    values = np.frombuffer(raw, dtype="<f8", count=count, offset=pos).reshape(dims)
    return StoredField(values.astype(float), float(h), tuple(origin))


def provenance_lines(config: dict, version: str) -> list[str]:
    return [f"# nonlocal-critical {version}",
            "# config: " + json.dumps(config, sort_keys=True, separators=(",", ":"))]


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def csv_text(columns: list[str], rows: list[dict], comments: list[str] = ()) -> str:
    buf = io.StringIO()
    for line in comments:
        buf.write(line + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_cell(row.get(c, "")) for c in columns])
    return buf.getvalue()


def read_csv(path) -> tuple[list[str], list[dict]]:
    """Comment lines and data rows (values left as strings)."""
    lines = Path(path).read_text().splitlines()
    comments = [ln for ln in lines if ln.startswith("#")]
    body = [ln for ln in lines if not ln.startswith("#")]
    return comments, list(csv.DictReader(body))


def slice_rows(field3: np.ndarray, h: float, origin, axis: int = 2, index: int | None = None):
    """Rows (x, y, value) of the mid-plane normal to ``axis`` for plotting."""
    index = field3.shape[axis] // 2 if index is None else index
    plane = np.take(field3, index, axis=axis)
    keep = [k for k in range(3) if k != axis]
    a = origin[keep[0]] + h * np.arange(plane.shape[0])
    b = origin[keep[1]] + h * np.arange(plane.shape[1])
    names = "xyz"
    out = []
    for i, x in enumerate(a):
        for j, y in enumerate(b):
            out.append({names[keep[0]]: float(x), names[keep[1]]: float(y), "u": float(plane[i, j])})
    return [names[keep[0]], names[keep[1]], "u"], out
