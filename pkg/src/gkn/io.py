"""Binary dataset/model files and CSV tables.

Dataset file (little-endian):
    b"GKND", u32 version, u32 d, u32 s, u32 N,
    str forcing, f64 grf shift, f64 grf exponent, str grf boundary, i64 grf kmax (-1: default),
    u64 seed, then N coefficient fields and N solution fields as f64, row-major, sample-major.

Model file (little-endian):
    b"GKNM", u32 version, u32 n, u32 T, u32 d, u32 node_in, str activation,
    u32 depth, depth x u32 kappa widths, f64 radius,
    u32 count, then per array: str name, u32 ndim, ndim x u32 shape, f64 data,
    then u32 channels and a (channels, 2) f64 block of normalisation mean/std.

``str`` is a u32 byte length followed by UTF-8 bytes.
"""
from __future__ import annotations

import csv
import io
import struct
from pathlib import Path

import numpy as np

from .data import CHANNELS, Dataset, NormStats
from .model import GknParams, ModelConfig
from .random_fields import GrfSpec

DATASET_MAGIC = b"GKND"
MODEL_MAGIC = b"GKNM"
VERSION = 1


class FormatError(ValueError):
    pass


class _Reader:
    def __init__(self, buf: bytes, path):
        self.buf, self.pos, self.path = buf, 0, path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError(f"{self.path}: truncated file")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        vals = struct.unpack("<" + fmt, self.take(struct.calcsize("<" + fmt)))
        return vals[0] if len(vals) == 1 else vals

    def string(self) -> str:
        return self.take(self.unpack("I")).decode("utf-8")

    def array(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(8 * count), dtype="<f8").astype(np.float64)


def _string(text: str) -> bytes:
    raw = text.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def _f64(a: np.ndarray) -> bytes:
    return np.ascontiguousarray(a, dtype="<f8").tobytes()


def _header(r: _Reader, magic: bytes):
    got = r.take(4)
    if got != magic:
        raise FormatError(f"{r.path}: bad magic {got!r}, expected {magic!r}")
    version = r.unpack("I")
    if version != VERSION:
        raise FormatError(f"{r.path}: unsupported format version {version}")


# ---------------------------------------------------------------------------
# datasets

def dataset_bytes(ds: Dataset) -> bytes:
    g = ds.grf
    parts = [DATASET_MAGIC, struct.pack("<IIII", VERSION, ds.d, ds.s, ds.N), _string(ds.forcing),
             struct.pack("<dd", g.shift, g.exponent), _string(g.boundary),
             struct.pack("<qQ", -1 if g.kmax is None else g.kmax, ds.seed),
             _f64(ds.a), _f64(ds.u)]
    return b"".join(parts)


def write_dataset(path, ds: Dataset) -> None:
    Path(path).write_bytes(dataset_bytes(ds))


def read_dataset(path) -> Dataset:
    r = _Reader(Path(path).read_bytes(), path)
    _header(r, DATASET_MAGIC)
    d, s, N = r.unpack("III")
    if d != 2:
        raise FormatError(f"{path}: only d=2 datasets are supported, got d={d}")
    forcing = r.string()
    shift, exponent = r.unpack("dd")
    boundary = r.string()
    kmax, seed = r.unpack("qQ")
    grf = GrfSpec(shift, exponent, boundary, None if kmax < 0 else kmax, seed)
    count = N * s ** d
    if len(r.buf) - r.pos != 2 * count * 8:
        raise FormatError(f"{path}: payload has {len(r.buf) - r.pos} bytes, expected {2 * count * 8}")
    a = r.array(count)
    u = r.array(count)
    return Dataset(a, u, s, d, forcing, grf, seed)


# ---------------------------------------------------------------------------
# models

def model_bytes(params: GknParams, stats: NormStats, radius: float) -> bytes:
    c = params.config
    parts = [MODEL_MAGIC, struct.pack("<IIIII", VERSION, c.n, c.T, c.d, c.input_width),
             _string(c.activation), struct.pack("<I", len(c.kappa_widths)),
             struct.pack(f"<{len(c.kappa_widths)}I", *c.kappa_widths),
             struct.pack("<dI", radius, len(params.arrays))]
    for name in sorted(params.arrays):
        arr = params.arrays[name]
        parts += [_string(name), struct.pack("<I", arr.ndim),
                  struct.pack(f"<{arr.ndim}I", *arr.shape), _f64(arr)]
    parts += [struct.pack("<I", len(CHANNELS)), _f64(stats.as_array())]
    return b"".join(parts)


def write_model(path, params: GknParams, stats: NormStats, radius: float) -> None:
    Path(path).write_bytes(model_bytes(params, stats, radius))


def read_model(path) -> tuple[GknParams, NormStats, float]:
    r = _Reader(Path(path).read_bytes(), path)
    _header(r, MODEL_MAGIC)
    n, T, d, node_in = r.unpack("IIII")
    activation = r.string()
    depth = r.unpack("I")
    widths = r.unpack(f"{depth}I") if depth > 1 else (r.unpack(f"{depth}I"),)
    radius, count = r.unpack("dI")
    edge_in = 2 * (d + 1)
    if widths[0] != edge_in or widths[-1] != n * n:
        raise FormatError(f"{path}: kappa widths {widths} inconsistent with n={n}, d={d}")
    config = ModelConfig(n=n, T=T, kappa_hidden=tuple(widths[1:-1]), d=d, activation=activation,
                         node_in=None if node_in == edge_in else node_in)
    arrays = {}
    for _ in range(count):
        name = r.string()
        ndim = r.unpack("I")
        shape = tuple(r.unpack(f"{ndim}I")) if ndim > 1 else ((r.unpack("I"),) if ndim else ())
        arrays[name] = r.array(int(np.prod(shape))).reshape(shape)
    channels = r.unpack("I")
    if channels != len(CHANNELS):
        raise FormatError(f"{path}: expected {len(CHANNELS)} normalisation channels, got {channels}")
    stats = NormStats.from_array(r.array(2 * channels))
    if r.pos != len(r.buf):
        raise FormatError(f"{path}: trailing bytes after model")
    return GknParams(config, arrays), stats, radius


# ---------------------------------------------------------------------------
# tables

def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def table_text(rows: list[dict]) -> str:
    if not rows:
        return ""
    columns = list(rows[0])
    for row in rows[1:]:
        columns += [c for c in row if c not in columns]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([format_value(row.get(c, "")) for c in columns])
    return buf.getvalue()


def write_table(path, rows: list[dict]) -> None:
    Path(path).write_text(table_text(rows), encoding="utf-8")


def read_table(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
