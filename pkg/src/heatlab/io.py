"""Binary field containers, CSV writers and content hashes."""
from __future__ import annotations

import csv
import hashlib
import struct
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .field_grid import Field, GridSpec

__all__ = [
    "MAGIC",
    "field_to_bytes",
    "field_from_bytes",
    "write_field",
    "read_field",
    "export_field_csv",
    "field_hash",
    "format_value",
    "write_rows",
    "write_dat",
    "write_keyvalue",
    "read_keyvalue",
]

MAGIC = b"HALF1"
_HEADER = struct.Struct("<5sqqdq")


def field_to_bytes(f: Field) -> bytes:
    """Header ``HALF1, d, N, L, ell`` then ``ell*N^d`` little-endian doubles."""
    g = f.grid
    head = _HEADER.pack(MAGIC, g.d, g.N, g.L, f.ell)
    body = np.ascontiguousarray(f.data, dtype="<f8").tobytes()
    return head + body


def field_from_bytes(buf: bytes) -> Field:
    if len(buf) < _HEADER.size:
        raise ValueError("truncated field container")
    magic, d, N, L, ell = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise ValueError("not a field container (bad magic)")
    grid = GridSpec(int(d), int(N), float(L))
    count = ell * grid.size
    body = buf[_HEADER.size:]
    if len(body) != 8 * count:
        raise ValueError(
            f"field container holds {len(body)} bytes, expected {8 * count}"
        )
    data = np.frombuffer(body, dtype="<f8").reshape((ell,) + grid.shape)
    return Field(grid, data)


def write_field(f: Field, path) -> Path:
    path = Path(path)
    path.write_bytes(field_to_bytes(f))
    return path


def read_field(path) -> Field:
    return field_from_bytes(Path(path).read_bytes())


def field_hash(f: Field) -> str:
    """SHA-256 of the serialized container."""
    return hashlib.sha256(field_to_bytes(f)).hexdigest()


def format_value(v) -> str:
    """17 significant digits for floats, plain text otherwise."""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    if v is None:
        return ""
    return str(v)


def export_field_csv(f: Field, path) -> Path:
    """One row per node: coordinates then components."""
    path = Path(path)
    pts = f.grid.points()
    comps = f.data.reshape(f.ell, -1).T
    names = [f"x{i}" for i in range(f.grid.d)] + [f"f{i}" for i in range(f.ell)]
    rows = np.concatenate([pts, comps], axis=1)
    write_rows(path, names, rows)
    return path


def write_rows(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    """Comma-separated rows with a mandatory header line."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(header))
        for row in rows:
            w.writerow([format_value(v) for v in row])
    return path


def write_dat(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    """Whitespace-separated variant readable by gnuplot; header is a comment."""
    path = Path(path)
    with path.open("w") as fh:
        fh.write("# " + " ".join(header) + "\n")
        for row in rows:
            cells = []
            for v in row:
                s = format_value(v)
                cells.append(s if s and " " not in s else f'"{s}"')
            fh.write(" ".join(cells) + "\n")
    return path


def write_keyvalue(path, items: dict) -> Path:
    path = Path(path)
    lines = [f"{k}={format_value(v)}" for k, v in items.items()]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_keyvalue(path) -> dict:
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"line {n}: expected key=value")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out
