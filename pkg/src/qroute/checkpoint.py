"""Versioned binary checkpoints.

Layout, all integers little-endian:

    bytes 0..3    magic "QGAT"
    bytes 4..7    format version (uint32)
    bytes 8..39   sha256 of the resolved config (raw 32 bytes)
    bytes 40..43  array count (uint32)
    then per array, sorted by name:
        uint16 name length, utf-8 name,
        uint8 ndim, uint32 per dimension,
        float64 data, C order.

The epoch counter rides along as a scalar array named "meta/epoch" so a
resumed run can continue numbering; every model tensor (parameters and
batch-norm statistics) is stored under its state-dict name.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import ParseError

MAGIC = b"QGAT"
FORMAT_VERSION = 1
EPOCH_KEY = "meta/epoch"


def save_checkpoint(path, arrays, config_hash_hex, epoch):
    """Write named float64 arrays plus the epoch marker."""
    hash_bytes = bytes.fromhex(config_hash_hex)
    if len(hash_bytes) != 32:
        raise ValueError(f"config hash must be 32 bytes, got {len(hash_bytes)}")
    items = dict(arrays)
    items[EPOCH_KEY] = np.array(float(epoch))
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(hash_bytes)
        fh.write(struct.pack("<I", len(items)))
        for name in sorted(items):
            arr = np.ascontiguousarray(np.asarray(items[name], dtype=np.float64))
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", arr.ndim))
            for dim in arr.shape:
                fh.write(struct.pack("<I", dim))
            fh.write(arr.astype("<f8").tobytes())


def _read_exact(fh, n, path, what):
    data = fh.read(n)
    if len(data) != n:
        raise ParseError(f"{path}: truncated checkpoint while reading {what}")
    return data


def load_checkpoint(path):
    """Returns (arrays, config_hash_hex, epoch)."""
    with open(path, "rb") as fh:
        if _read_exact(fh, 4, path, "magic") != MAGIC:
            raise ParseError(f"{path}: not a checkpoint (bad magic)")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, path, "version"))
        if version != FORMAT_VERSION:
            raise ParseError(
                f"{path}: unsupported checkpoint version {version} "
                f"(this build reads {FORMAT_VERSION})"
            )
        hash_hex = _read_exact(fh, 32, path, "config hash").hex()
        (count,) = struct.unpack("<I", _read_exact(fh, 4, path, "array count"))
        arrays = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", _read_exact(fh, 2, path, "name length"))
            name = _read_exact(fh, name_len, path, "name").decode("utf-8")
            (ndim,) = struct.unpack("<B", _read_exact(fh, 1, path, "ndim"))
            shape = tuple(
                struct.unpack("<I", _read_exact(fh, 4, path, "dimension"))[0]
                for _ in range(ndim)
            )
            n_items = int(np.prod(shape)) if shape else 1
            raw = _read_exact(fh, 8 * n_items, path, f"data of {name}")
            arrays[name] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
        trailing = fh.read(1)
        if trailing:
            raise ParseError(f"{path}: trailing bytes after the last array")
    epoch_arr = arrays.pop(EPOCH_KEY, None)
    # the writer stores the scalar as a length-one vector
    epoch = int(epoch_arr.reshape(-1)[0]) if epoch_arr is not None else 0
    return arrays, hash_hex, epoch
