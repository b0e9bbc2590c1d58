"""Binary snapshots, particle dumps, CSV helpers and atomic writes.

Field snapshot layout (little endian, 64-byte header)::

    0   4s  magic b"KNFP"
    4   u4  version
    8   u4  d
    12  u4  kinetic flag
    16  u4  n_x
    20  u4  n_v
    24  f8  box_x
    32  f8  box_v
    40  24 bytes zero padding
    64  f8[...] samples, row-major in grid.shape

Particle dump layout: magic b"KNPD", version, order (1 or 2), d, N, seed (u8),
padding to 64 bytes, then N rows of ``d`` (first order) or ``2d`` doubles.
"""

from __future__ import annotations

import contextlib
import csv
import io
import json
import os
import struct
import tempfile

import numpy as np

from .grid import PhaseField, PhaseGrid

FIELD_MAGIC = b"KNFP"
PARTICLE_MAGIC = b"KNPD"
VERSION = 1
HEADER_SIZE = 64
_FIELD_HEAD = struct.Struct("<4sIIIIIdd")
_PART_HEAD = struct.Struct("<4sIIIQQ")


@contextlib.contextmanager
def atomic_open(path, mode="w", **kw):
    """Write to a temp file beside ``path`` and rename on success."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, mode, **kw) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def write_field(path, f):
    g = f.grid
    head = _FIELD_HEAD.pack(FIELD_MAGIC, VERSION, g.d, int(g.kinetic), g.n_x, g.n_v,
                            g.box_x, g.box_v)
    head = head.ljust(HEADER_SIZE, b"\0")
    with atomic_open(path, "wb") as fh:
        fh.write(head)
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())


def read_field(path):
    with open(path, "rb") as fh:
        head = fh.read(HEADER_SIZE)
        if len(head) != HEADER_SIZE:
            raise ValueError(f"{path}: truncated header")
        magic, version, d, kinetic, n_x, n_v, box_x, box_v = _FIELD_HEAD.unpack(
            head[: _FIELD_HEAD.size])
        if magic != FIELD_MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        if version != VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        grid = PhaseGrid(d=d, kinetic=bool(kinetic), box_x=box_x, n_x=n_x,
                         box_v=box_v, n_v=n_v)
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != grid.size:
        raise ValueError(f"{path}: expected {grid.size} samples, found {data.size}")
    return PhaseField(grid, data.reshape(grid.shape))


def write_particles(path, ens):
    order = 2 if ens.order == "second" else 1
    d = ens.x.shape[1]
    head = _PART_HEAD.pack(PARTICLE_MAGIC, VERSION, order, d, ens.N,
                           int(ens.seed or 0)).ljust(HEADER_SIZE, b"\0")
    rows = ens.x if ens.v is None else np.hstack([ens.x, ens.v])
    with atomic_open(path, "wb") as fh:
        fh.write(head)
        fh.write(np.ascontiguousarray(rows, dtype="<f8").tobytes())


def read_particles(path):
    """Return ``(order, seed, x, v)`` from a particle dump."""
    with open(path, "rb") as fh:
        head = fh.read(HEADER_SIZE)
        magic, version, order, d, n, seed = _PART_HEAD.unpack(head[: _PART_HEAD.size])
        if magic != PARTICLE_MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        data = np.frombuffer(fh.read(), dtype="<f8")
    width = d * order
    rows = data.reshape(n, width)
    x = rows[:, :d].copy()
    v = rows[:, d:].copy() if order == 2 else None
    return ("second" if order == 2 else "first"), seed, x, v


def field_slice_csv(path, f, fixed=None):
    """Write a 1-D or 2-D slice of ``f`` as CSV rows ``coord..., value``.

    ``fixed`` maps axis -> node index for the axes held constant; the
    remaining one or two axes are written out.
    """
    g = f.grid
    fixed = dict(fixed or {})
    free = [a for a in range(g.ndim) if a not in fixed]
    if len(free) not in (1, 2):
        raise ValueError("slice must leave one or two free axes")
    index = tuple(fixed.get(a, slice(None)) for a in range(g.ndim))
    block = np.asarray(f.values[index])
    coords = [g.coord(a).ravel() for a in free]
    names = [_axis_name(g, a) for a in free]
    with atomic_open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names + ["value"])
        if len(free) == 1:
            for c, val in zip(coords[0], block):
                w.writerow([repr(float(c)), repr(float(val))])
        else:
            for i, c0 in enumerate(coords[0]):
                for j, c1 in enumerate(coords[1]):
                    w.writerow([repr(float(c0)), repr(float(c1)), repr(float(block[i, j]))])


def _axis_name(g, a):
    if g.kinetic and a >= g.d:
        return f"v{a - g.d + 1}"
    return f"x{a + 1}"


def write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(x) for x in r])
    with atomic_open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return x


def write_json(path, obj):
    with atomic_open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")
