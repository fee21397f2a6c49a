"""Ensemble snapshot files, format tag ``ce-ensemble/1``.

Layout (all integers little-endian)::

    b"ce-ensemble/1\\n"             14-byte magic line
    uint64                          length L of the JSON header in bytes
    L bytes                         UTF-8 JSON header, keys sorted
    P                               float64, C order, shape header["shape"]
    S                               float64, C order, same shape

The header holds ``format``, ``grid`` (axes as [lower, upper, n] plus
labels), ``hbar``, ``dtype`` ("<f8"), ``shape``, ``arrays`` (["P", "S"])
and free-form ``metadata`` (scenario name, time t, ...). Nothing depends
on the clock, so equal ensembles produce byte-identical files.
"""

import json
import os
import struct
import tempfile

import numpy as np

from .ensemble import Ensemble
from .grid import Grid

FORMAT = "ce-ensemble/1"
MAGIC = (FORMAT + "\n").encode()


class SnapshotError(ValueError):
    pass


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, float)):
        return float(v)
    if isinstance(v, (np.integer, int)) and not isinstance(v, bool):
        return int(v)
    if isinstance(v, (str, bool)) or v is None:
        return v
    return str(v)


def to_bytes(e: Ensemble) -> bytes:
    header = {
        "format": FORMAT,
        "grid": e.grid.to_dict(),
        "hbar": float(e.hbar),
        "dtype": "<f8",
        "shape": list(e.grid.shape),
        "arrays": ["P", "S"],
        "metadata": _jsonable(e.metadata),
    }
    hb = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    P = np.ascontiguousarray(e.P, dtype="<f8").tobytes()
    S = np.ascontiguousarray(e.S, dtype="<f8").tobytes()
    return MAGIC + struct.pack("<Q", len(hb)) + hb + P + S


def from_bytes(data: bytes) -> Ensemble:
    if not data.startswith(MAGIC):
        raise SnapshotError(f"not a {FORMAT} snapshot")
    off = len(MAGIC)
    (n,) = struct.unpack_from("<Q", data, off)
    off += 8
    header = json.loads(data[off:off + n].decode())
    off += n
    if header.get("format") != FORMAT or header.get("dtype") != "<f8":
        raise SnapshotError("unsupported snapshot header")
    shape = tuple(header["shape"])
    size = int(np.prod(shape)) * 8
    if len(data) != off + 2 * size:
        raise SnapshotError(f"snapshot payload has {len(data) - off} bytes, expected {2 * size}")
    P = np.frombuffer(data, dtype="<f8", count=size // 8, offset=off).reshape(shape)
    S = np.frombuffer(data, dtype="<f8", count=size // 8, offset=off + size).reshape(shape)
    grid = Grid.from_dict(header["grid"])
    return Ensemble(grid, P, S, header["hbar"], metadata=header.get("metadata", {}))


def atomic_write(path, data):
    """Write bytes or text via a temporary file in the same directory and rename."""
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    if isinstance(data, str):
        data = data.encode()
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        # mkstemp creates 0600; give the usual umask-derived mode
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save(e: Ensemble, path):
    atomic_write(path, to_bytes(e))


def load(path) -> Ensemble:
    with open(path, "rb") as fh:
        return from_bytes(fh.read())
