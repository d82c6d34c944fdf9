"""Little-endian binary containers.

Two layouts are used:

* sample tensors (``ZTNS``): magic, u32 version, u32 rank, u32 dims[rank],
  then float32 data in row-major order;
* checkpoints (``ZSTG``/``ZDVS``/``ZREL``): magic, u32 version, u32 header
  length, UTF-8 JSON header, then each tensor listed in ``header["tensors"]``
  as float32 data in that order.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import DataError

TENSOR_MAGIC = b"ZTNS"
FORMAT_VERSION = 1


def write_tensor(path, array) -> None:
    array = np.ascontiguousarray(array, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(TENSOR_MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, array.ndim))
        fh.write(struct.pack(f"<{array.ndim}I", *array.shape))
        fh.write(array.tobytes())


def read_tensor(path) -> np.ndarray:
    """Read a ``ZTNS`` file, returning float64."""
    raw = Path(path).read_bytes()
    if raw[:4] != TENSOR_MAGIC:
        raise DataError(f"{path}: bad magic {raw[:4]!r}")
    version, rank = struct.unpack_from("<II", raw, 4)
    if version != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported version {version}")
    dims = struct.unpack_from(f"<{rank}I", raw, 12)
    offset = 12 + 4 * rank
    count = int(np.prod(dims)) if rank else 1
    if len(raw) != offset + 4 * count:
        raise DataError(f"{path}: expected {count} floats, file size disagrees")
    data = np.frombuffer(raw, dtype="<f4", count=count, offset=offset)
    return data.reshape(dims).astype(np.float64)


def _dump_header(header: dict) -> bytes:
    return json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")


def write_checkpoint(path, magic: bytes, header: dict, tensors: dict) -> None:
    """Write named tensors after a JSON header; order follows ``tensors``."""
    header = dict(header)
    header["tensors"] = [{"name": k, "dims": list(np.shape(v))} for k, v in tensors.items()]
    blob = _dump_header(header)
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(blob)))
        fh.write(blob)
        for v in tensors.values():
            fh.write(np.ascontiguousarray(v, dtype="<f4").tobytes())


def read_checkpoint(path, magic: bytes):
    """Return ``(header, tensors)``; tensors come back as float64 arrays."""
    raw = Path(path).read_bytes()
    if raw[:4] != magic:
        raise DataError(f"{path}: expected magic {magic!r}, got {raw[:4]!r}")
    version, hlen = struct.unpack_from("<II", raw, 4)
    if version != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported version {version}")
    try:
        header = json.loads(raw[12:12 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: corrupt header ({exc})") from None
    offset = 12 + hlen
    tensors = {}
    for entry in header["tensors"]:
        dims = tuple(entry["dims"])
        count = int(np.prod(dims)) if dims else 1
        if offset + 4 * count > len(raw):
            raise DataError(f"{path}: truncated while reading {entry['name']}")
        arr = np.frombuffer(raw, dtype="<f4", count=count, offset=offset)
        tensors[entry["name"]] = arr.reshape(dims).astype(np.float64)
        offset += 4 * count
    if offset != len(raw):
        raise DataError(f"{path}: {len(raw) - offset} trailing bytes")
    return header, tensors
