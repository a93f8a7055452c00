"""Grid file formats.

Binary layout (all little-endian)::

    magic      4s   b"SPGR"
    version    u4   1
    kind       u4   0 field, 1 e1-gradient, 2 shadow-discrete, 3 shadow-continuous, 4 goodmap level
    x0, y0     f8 f8
    spacing    f8
    nx, ny     u4 u4
    R          f8   kernel truncation (inf = untruncated)
    horizon    f8   shadow horizon (nan for fields)
    seed       u8
    stream     u8
    values     ny * nx f8, row-major, rows along e2

Invalid shadow sites are stored as NaN.
"""

import csv
import io
import math
import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"SPGR"
VERSION = 1
_HEADER = struct.Struct("<4sII2ddIIddQQ")

KINDS = {"field": 0, "e1-gradient": 1, "shadow-discrete": 2, "shadow-continuous": 3, "goodmap": 4}
_KIND_NAMES = {v: k for k, v in KINDS.items()}


@dataclass
class GridHeader:
    kind: str
    origin: tuple
    spacing: float
    nx: int
    ny: int
    R: float = math.inf
    horizon: float = math.nan
    seed: int = 0
    stream: int = 0


def write_grid(path, header: GridHeader, values):
    values = np.asarray(values, dtype="<f8")
    if values.shape != (header.ny, header.nx):
        raise ValueError(f"values shape {values.shape} does not match header ({header.ny}, {header.nx})")
    head = _HEADER.pack(MAGIC, VERSION, KINDS[header.kind], float(header.origin[0]),
                        float(header.origin[1]), float(header.spacing), header.nx, header.ny,
                        float(header.R), float(header.horizon),
                        header.seed & 0xFFFFFFFFFFFFFFFF, header.stream & 0xFFFFFFFFFFFFFFFF)
    with open(path, "wb") as fh:
        fh.write(head)
        fh.write(np.ascontiguousarray(values).tobytes())


def read_grid(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, version, kind, x0, y0, sp, nx, ny, R, hor, seed, stream = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    body = raw[_HEADER.size:]
    if len(body) != 8 * nx * ny:
        raise ValueError(f"{path}: expected {nx * ny} values, found {len(body) // 8}")
    vals = np.frombuffer(body, dtype="<f8").reshape(ny, nx).astype(float)
    return GridHeader(_KIND_NAMES[kind], (x0, y0), sp, nx, ny, R, hor, seed, stream), vals


def write_csv_grid(path, origin, spacing, values):
    """Long-format CSV: x, y, value (one row per lattice point)."""
    values = np.asarray(values)
    ny, nx = values.shape
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "value"])
        for r in range(ny):
            y = origin[1] + r * spacing
            for c in range(nx):
                w.writerow([repr(origin[0] + c * spacing), repr(y), repr(float(values[r, c]))])


def write_pgm(path, image):
    """Binary PGM (P5), maxval 255, first row written is the top of the image."""
    img = np.asarray(image, dtype=np.uint8)
    if img.ndim != 2:
        raise ValueError("PGM image must be 2-D")
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(img).tobytes())


def read_pgm(path):
    with open(path, "rb") as fh:
        data = fh.read()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        end = pos
        while not data[end:end + 1].isspace():
            end += 1
        tokens.append(data[pos:end])
        pos = end
    pos += 1
    if tokens[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval != 255:
        raise ValueError(f"{path}: only maxval 255 is supported")
    return np.frombuffer(data[pos:pos + w * h], dtype=np.uint8).reshape(h, w)


def write_table(path_or_buf, header, rows):
    """RFC-4180 style CSV with a header row."""
    if isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__"):
        with open(path_or_buf, "w", newline="") as fh:
            _write_rows(fh, header, rows)
    else:
        _write_rows(path_or_buf, header, rows)


def _write_rows(fh, header, rows):
    w = csv.writer(fh, quoting=csv.QUOTE_MINIMAL, lineterminator="\r\n")
    w.writerow(header)
    for row in rows:
        w.writerow(row)


def table_to_string(header, rows):
    buf = io.StringIO()
    _write_rows(buf, header, rows)
    return buf.getvalue()


def read_sites(path):
    """Site list from a CSV of ``x,y`` integer pairs (optional header line)."""
    sites = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                sites.append((int(row[0]), int(row[1])))
            except ValueError:
                if sites:
                    raise
    return sites
