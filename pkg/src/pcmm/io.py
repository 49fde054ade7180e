"""Point cloud files: ASCII XYZ, ASCII PLY and binary little-endian PLY."""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .cloud import CloudError, as_points
from .model import atomic_write

PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


def _parse_ply_header(data: bytes):
    end = data.find(b"end_header")
    if not data.startswith(b"ply") or end < 0:
        raise CloudError("not a PLY file")
    nl = data.find(b"\n", end)
    body = nl + 1 if nl >= 0 else len(data)
    lines = data[:end].decode("ascii", errors="replace").splitlines()
    fmt = None
    elements = []  # (name, count, [(prop, dtype)])
    for line in lines[1:]:
        tok = line.split()
        if not tok or tok[0] in ("comment", "obj_info"):
            continue
        if tok[0] == "format":
            fmt = tok[1]
        elif tok[0] == "element":
            elements.append((tok[1], int(tok[2]), []))
        elif tok[0] == "property":
            if not elements:
                raise CloudError("PLY property outside an element")
            if tok[1] == "list":
                elements[-1][2].append((tok[-1], ("list", tok[2], tok[3])))
            else:
                if tok[1] not in PLY_TYPES:
                    raise CloudError(f"unknown PLY type {tok[1]!r}")
                elements[-1][2].append((tok[2], PLY_TYPES[tok[1]]))
    if fmt not in ("ascii", "binary_little_endian"):
        raise CloudError(f"unsupported PLY format {fmt!r}")
    return fmt, elements, body


def _xyz_columns(props):
    names = [p[0] for p in props]
    try:
        return [names.index(c) for c in "xyz"]
    except ValueError:
        raise CloudError("PLY vertex element lacks x/y/z") from None


def read_ply(data: bytes) -> np.ndarray:
    fmt, elements, pos = _parse_ply_header(data)
    for name, count, props in elements:
        if name == "vertex":
            break
        # skip whatever precedes the vertices
        if fmt == "ascii":
            for _ in range(count):
                pos = data.index(b"\n", pos) + 1
        else:
            if any(isinstance(p[1], tuple) for p in props):
                raise CloudError("list properties before vertices are not supported")
            pos += count * np.dtype([(p[0], "<" + p[1]) for p in props]).itemsize
    else:
        raise CloudError("PLY file has no vertex element")
    cols = _xyz_columns(props)
    if any(isinstance(p[1], tuple) for p in props):
        raise CloudError("list properties on vertices are not supported")
    if fmt == "ascii":
        rows = data[pos:].decode("ascii", errors="replace").splitlines()
        rows = [r for r in rows if r.strip()][:count]
        if len(rows) < count:
            raise CloudError("PLY file truncated")
        try:
            table = np.array([r.split() for r in rows], dtype=np.float64)
        except ValueError as exc:
            raise CloudError(f"bad PLY vertex row: {exc}") from None
        if table.ndim != 2 or table.shape[1] < len(props):
            raise CloudError("PLY vertex rows have too few values")
        pts = table[:, cols]
    else:
        dt = np.dtype([(p[0], "<" + p[1]) for p in props])
        if len(data) - pos < count * dt.itemsize:
            raise CloudError("PLY file truncated")
        rec = np.frombuffer(data, dtype=dt, count=count, offset=pos)
        pts = np.column_stack([rec[props[c][0]].astype(np.float64) for c in cols])
    return as_points(pts)


def read_xyz(text: str) -> np.ndarray:
    rows = []
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.replace(",", " ").split()
        if len(tok) < 3:
            raise CloudError(f"line {n}: expected x y z")
        try:
            rows.append([float(t) for t in tok[:3]])
        except ValueError:
            raise CloudError(f"line {n}: not a number") from None
    return as_points(np.array(rows, dtype=np.float64).reshape(-1, 3))


def read_cloud(path) -> np.ndarray:
    """Load an (N, 3) float64 cloud from a .ply or .xyz/.txt file."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise CloudError(f"cannot read {path}: {exc.strerror}") from None
    if data.startswith(b"ply"):
        return read_ply(data)
    return read_xyz(data.decode("utf-8", errors="replace"))


def write_cloud(path, points, binary: bool = True) -> None:
    """Write a cloud; the format follows the suffix (.ply, anything else XYZ)."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    path = Path(path)
    if path.suffix.lower() == ".ply":
        fmt = "binary_little_endian" if binary else "ascii"
        prop = "double" if binary else "float"
        head = (f"ply\nformat {fmt} 1.0\nelement vertex {len(pts)}\n"
                f"property {prop} x\nproperty {prop} y\nproperty {prop} z\nend_header\n").encode("ascii")
        if binary:
            body = pts.astype("<f8").tobytes()
        else:
            body = "".join(f"{x!r} {y!r} {z!r}\n" for x, y, z in pts.tolist()).encode("ascii")
        atomic_write(os.fspath(path), head + body)
    else:
        body = "".join(f"{x!r} {y!r} {z!r}\n" for x, y, z in pts.tolist())
        atomic_write(os.fspath(path), body.encode("ascii"))
