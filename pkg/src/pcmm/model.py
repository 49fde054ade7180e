"""Scene model container and its on-disk format.

File layout (version 1)::

    PCMM1\\n
    <key> = <value>\\n        config echo and deterministic statistics
    ...
    end\\n
    GAUS <u32 n>  n x [f64 mean[3], f64 cov[xx xy xz yy yz zz], u64 count]
    PLAN <u32 n>  n x <plane record>
    SURF <u32 n>  n x [<plane record>, <spline record>]
    END!

    plane record:  f64 origin[3], f64 basis[9] (row-major), f64 cell,
                   f64 grid_origin[2], u32 nx, u32 ny,
                   occupancy bits, boundary bits (row-major, np.packbits, ceil(nx*ny/8) bytes each),
                   u32 m, m x [u32 i, u32 j, u8 corner, f64 lx, f64 ly, f64 lxy], u64 count
    spline record: u8 degree_x, u8 degree_y, u32 kx, f64 knots_x[kx],
                   u32 ky, f64 knots_y[ky], f64 z[(nx+2)*(ny+2)] (row-major)

All numbers are little-endian; floats are IEEE-754 binary64, so a
save/load round trip is bit-exact.
"""

from __future__ import annotations

import os
import struct
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .boundary import BoundaryGrid
from .bspline import SplinePatch
from .cloud import PipelineConfig

MAGIC = "PCMM"
VERSION = 1


class ModelFormatError(ValueError):
    """Malformed model file; ``offset`` is the byte position of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class ModelVersionError(ValueError):
    pass


@dataclass
class GaussianPrimitive:
    mean: np.ndarray
    covariance: np.ndarray
    count: int


@dataclass
class PlanePrimitive:
    origin: np.ndarray
    basis: np.ndarray
    grid: BoundaryGrid
    count: int


@dataclass
class SurfacePrimitive:
    origin: np.ndarray
    basis: np.ndarray
    grid: BoundaryGrid
    patch: SplinePatch
    count: int


@dataclass
class SceneModel:
    gaussians: list[GaussianPrimitive] = field(default_factory=list)
    planes: list[PlanePrimitive] = field(default_factory=list)
    surfaces: list[SurfacePrimitive] = field(default_factory=list)
    config: PipelineConfig = field(default_factory=PipelineConfig)
    stats: dict = field(default_factory=dict)

    @property
    def primitive_count(self) -> int:
        return len(self.gaussians) + len(self.planes) + len(self.surfaces)


# -- comparison ---------------------------------------------------------------

def _grid_items(prefix, g: BoundaryGrid):
    b = g.boundary
    return [
        (prefix + "cell", g.cell), (prefix + "origin", g.origin), (prefix + "nx", g.nx),
        (prefix + "ny", g.ny), (prefix + "occupied", g.occupied), (prefix + "boundary", b),
        (prefix + "corner", np.where(b, g.corner, 0)),
        (prefix + "lines", np.where(b[..., None], g.lines, 0.0)),
    ]


def model_items(m: SceneModel) -> list[tuple[str, object]]:
    """Flatten a model into (name, value) pairs covering every stored field."""
    items: list[tuple[str, object]] = [("config." + k, v) for k, v in m.config.as_dict().items()]
    items += [("stats." + k, v) for k, v in sorted(m.stats.items())]
    for n, g in enumerate(m.gaussians):
        items += [(f"g{n}.mean", g.mean), (f"g{n}.cov", g.covariance), (f"g{n}.count", g.count)]
    for n, p in enumerate(m.planes):
        items += [(f"p{n}.origin", p.origin), (f"p{n}.basis", p.basis), (f"p{n}.count", p.count)]
        items += _grid_items(f"p{n}.", p.grid)
    for n, s in enumerate(m.surfaces):
        items += [(f"s{n}.origin", s.origin), (f"s{n}.basis", s.basis), (f"s{n}.count", s.count)]
        items += _grid_items(f"s{n}.", s.grid)
        pt = s.patch
        items += [(f"s{n}.deg", (pt.degree_x, pt.degree_y)), (f"s{n}.kx", pt.knots_x),
                  (f"s{n}.ky", pt.knots_y), (f"s{n}.z", pt.z)]
    return items


def _same(a, b) -> bool:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        return False
    if a.dtype.kind == "f" or b.dtype.kind == "f":
        return np.array_equal(a.astype(np.float64).view(np.uint64), b.astype(np.float64).view(np.uint64))
    return np.array_equal(a, b)


def model_differences(a: SceneModel, b: SceneModel) -> list[str]:
    """Names of fields that are not bit-identical between two models."""
    ia, ib = model_items(a), model_items(b)
    if [k for k, _ in ia] != [k for k, _ in ib]:
        return ["<structure>"]
    return [k for (k, x), (_, y) in zip(ia, ib) if not _same(x, y)]


# -- writing ------------------------------------------------------------------

def _header(m: SceneModel) -> bytes:
    lines = [f"{MAGIC}{VERSION}"]
    for k, v in m.config.as_dict().items():
        lines.append(f"{k} = {v!r}")
    for k, v in sorted(m.stats.items()):
        lines.append(f"stat.{k} = {int(v)}")
    lines.append("end")
    return ("\n".join(lines) + "\n").encode("ascii")


def _pack_bits(mask: np.ndarray) -> bytes:
    return np.packbits(np.asarray(mask, dtype=bool).ravel()).tobytes()


def _f64(a) -> bytes:
    return np.asarray(a, dtype="<f8").ravel().tobytes()


def _plane_record(origin, basis, g: BoundaryGrid) -> bytes:
    out = [_f64(origin), _f64(basis), _f64([g.cell]), _f64(g.origin),
           struct.pack("<II", g.nx, g.ny), _pack_bits(g.occupied), _pack_bits(g.boundary)]
    bi, bj = np.nonzero(g.boundary)
    out.append(struct.pack("<I", len(bi)))
    for i, j in zip(bi, bj):
        out.append(struct.pack("<IIB", int(i), int(j), int(g.corner[i, j])))
        out.append(_f64(g.lines[i, j]))
    return b"".join(out)


def dumps(m: SceneModel) -> bytes:
    out = [_header(m)]
    out.append(b"GAUS" + struct.pack("<I", len(m.gaussians)))
    for g in m.gaussians:
        c = g.covariance
        out.append(_f64(g.mean) + _f64([c[0, 0], c[0, 1], c[0, 2], c[1, 1], c[1, 2], c[2, 2]]))
        out.append(struct.pack("<Q", int(g.count)))
    out.append(b"PLAN" + struct.pack("<I", len(m.planes)))
    for p in m.planes:
        out.append(_plane_record(p.origin, p.basis, p.grid) + struct.pack("<Q", int(p.count)))
    out.append(b"SURF" + struct.pack("<I", len(m.surfaces)))
    for s in m.surfaces:
        out.append(_plane_record(s.origin, s.basis, s.grid) + struct.pack("<Q", int(s.count)))
        pt = s.patch
        out.append(struct.pack("<BB", pt.degree_x, pt.degree_y))
        out.append(struct.pack("<I", len(pt.knots_x)) + _f64(pt.knots_x))
        out.append(struct.pack("<I", len(pt.knots_y)) + _f64(pt.knots_y))
        out.append(_f64(pt.z))
    out.append(b"END!")
    return b"".join(out)


def atomic_write(path, data: bytes):
    """Write via a temporary file in the target directory, then rename."""
    path = os.fspath(path)
    folder = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_model(m: SceneModel, path):
    atomic_write(path, dumps(m))


# -- reading ------------------------------------------------------------------

class _Reader:
    def __init__(self, data: bytes, pos: int = 0):
        self.data = data
        self.pos = pos

    def take(self, n: int, what: str) -> bytes:
        if n < 0 or self.pos + n > len(self.data):
            raise ModelFormatError(f"truncated file while reading {what}", self.pos)
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

    def f64(self, n: int, what: str) -> np.ndarray:
        return np.frombuffer(self.take(8 * n, what), dtype="<f8").astype(np.float64)

    def tag(self, expected: bytes):
        at = self.pos
        got = self.take(4, f"section tag {expected.decode()}")
        if got != expected:
            raise ModelFormatError(f"expected section {expected.decode()!r}, found {got!r}", at)


_CONFIG_TYPES = {"N_em": int, "N_min": int, "rng_seed": int}


def _parse_header(data: bytes):
    first_nl = data.find(b"\n")
    if first_nl < 0:
        raise ModelFormatError("missing header line", 0)
    magic = data[:first_nl].decode("ascii", errors="replace")
    if not magic.startswith(MAGIC):
        raise ModelFormatError(f"bad magic {magic[:16]!r}", 0)
    if magic != f"{MAGIC}{VERSION}":
        raise ModelVersionError(f"unsupported model version {magic[len(MAGIC):]!r}; expected {VERSION}")
    pos = first_nl + 1
    cfg, stats = {}, {}
    while True:
        nl = data.find(b"\n", pos)
        if nl < 0:
            raise ModelFormatError("unterminated header", pos)
        line = data[pos:nl].decode("ascii", errors="replace").strip()
        if line == "end":
            return cfg, stats, nl + 1
        if "=" not in line:
            raise ModelFormatError(f"bad header line {line!r}", pos)
        key, value = (s.strip() for s in line.split("=", 1))
        try:
            if key.startswith("stat."):
                stats[key[5:]] = int(value)
            else:
                cfg[key] = _CONFIG_TYPES.get(key, float)(value)
        except ValueError:
            raise ModelFormatError(f"bad value for {key!r}", pos) from None
        pos = nl + 1


def _unpack_bits(r: _Reader, nx: int, ny: int, what: str) -> np.ndarray:
    raw = np.frombuffer(r.take((nx * ny + 7) // 8, what), dtype=np.uint8)
    return np.unpackbits(raw)[: nx * ny].astype(bool).reshape(nx, ny)


def _read_plane(r: _Reader):
    origin = r.f64(3, "origin")
    basis = r.f64(9, "basis").reshape(3, 3)
    cell = float(r.f64(1, "cell")[0])
    gorigin = r.f64(2, "grid origin")
    at = r.pos
    nx, ny = r.unpack("<II", "grid size")
    if nx == 0 or ny == 0 or nx * ny > 1 << 31:
        raise ModelFormatError("invalid grid size", at)
    occ = _unpack_bits(r, nx, ny, "occupancy")
    bnd = _unpack_bits(r, nx, ny, "boundary")
    (m,) = r.unpack("<I", "clip count")
    corner = np.zeros((nx, ny), dtype=np.int8)
    lines = np.zeros((nx, ny, 3))
    for _ in range(m):
        at = r.pos
        i, j, c = r.unpack("<IIB", "clip tuple")
        if i >= nx or j >= ny or c > 3:
            raise ModelFormatError("clip tuple out of range", at)
        corner[i, j] = c
        lines[i, j] = r.f64(3, "clip lines")
    (count,) = r.unpack("<Q", "point count")
    grid = BoundaryGrid(cell=cell, origin=gorigin, nx=nx, ny=ny, occupied=occ, boundary=bnd,
                        corner=corner, lines=lines, means=np.zeros((nx, ny, 3)))
    return origin, basis, grid, count


def loads(data: bytes) -> SceneModel:
    cfg_items, stats, pos = _parse_header(data)
    try:
        cfg = PipelineConfig(**cfg_items)
    except (TypeError, ValueError) as exc:
        raise ModelFormatError(f"invalid config echo: {exc}", 0) from None
    r = _Reader(data, pos)
    model = SceneModel(config=cfg, stats=stats)
    r.tag(b"GAUS")
    (n,) = r.unpack("<I", "gaussian count")
    for _ in range(n):
        mean = r.f64(3, "gaussian mean")
        c = r.f64(6, "gaussian covariance")
        cov = np.array([[c[0], c[1], c[2]], [c[1], c[3], c[4]], [c[2], c[4], c[5]]])
        (count,) = r.unpack("<Q", "gaussian count")
        model.gaussians.append(GaussianPrimitive(mean, cov, count))
    r.tag(b"PLAN")
    (n,) = r.unpack("<I", "plane count")
    for _ in range(n):
        origin, basis, grid, count = _read_plane(r)
        model.planes.append(PlanePrimitive(origin, basis, grid, count))
    r.tag(b"SURF")
    (n,) = r.unpack("<I", "surface count")
    for _ in range(n):
        origin, basis, grid, count = _read_plane(r)
        dx, dy = r.unpack("<BB", "spline degrees")
        (kx,) = r.unpack("<I", "knot count")
        knots_x = r.f64(kx, "knots")
        (ky,) = r.unpack("<I", "knot count")
        knots_y = r.f64(ky, "knots")
        at = r.pos
        if kx != grid.nx + dx + 3 or ky != grid.ny + dy + 3:
            raise ModelFormatError("knot vector length does not match grid", at)
        z = r.f64((grid.nx + 2) * (grid.ny + 2), "control heights").reshape(grid.nx + 2, grid.ny + 2)
        patch = SplinePatch(grid.nx, grid.ny, grid.origin.copy(), grid.cell, dx, dy, knots_x, knots_y, z)
        model.surfaces.append(SurfacePrimitive(origin, basis, grid, patch, count))
    r.tag(b"END!")
    if r.pos != len(data):
        raise ModelFormatError("trailing bytes after END!", r.pos)
    return model


def load_model(path) -> SceneModel:
    with open(path, "rb") as fh:
        return loads(fh.read())
