"""Flat binary tensor files and a plain-text loader for small tensors.

Binary layout, all header words 64-bit little-endian:
    magic "TNSRBIN\\0" (8 bytes), dtype code, rank, extents[rank],
    then row-major element data (int64 or float64, little-endian).
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"TNSRBIN\x00"
_DTYPES = {0: np.dtype("<i8"), 1: np.dtype("<f8")}
_CODES = {np.dtype("<i8"): 0, np.dtype("<f8"): 1}


def save_tensor(path, array: np.ndarray) -> None:
    arr = np.asarray(array)
    if arr.dtype.kind == "i":
        arr = arr.astype("<i8")
    elif arr.dtype.kind == "f":
        arr = arr.astype("<f8")
    else:
        raise ValueError(f"unsupported dtype {arr.dtype}")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", _CODES[arr.dtype]))
        fh.write(struct.pack("<Q", arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        fh.write(np.ascontiguousarray(arr).tobytes())


def load_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != MAGIC:
            raise ValueError(f"{path}: not a tensor file (bad magic {magic!r})")
        code, rank = struct.unpack("<QQ", fh.read(16))
        if code not in _DTYPES:
            raise ValueError(f"{path}: unknown dtype code {code}")
        shape = struct.unpack(f"<{rank}Q", fh.read(8 * rank))
        dtype = _DTYPES[code]
        count = 1
        for s in shape:
            count *= s
        data = np.frombuffer(fh.read(count * 8), dtype=dtype, count=count)
        return data.reshape(shape).copy()


def load_csv_tensor(path) -> np.ndarray:
    """Small-tensor text format: first data line holds the extents, the
    rest hold the row-major values. '#' starts a comment."""
    tokens: list[str] = []
    shape = None
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.replace(",", " ").split()
            if shape is None:
                shape = tuple(int(p) for p in parts)
                continue
            tokens.extend(parts)
    if shape is None:
        raise ValueError(f"{path}: empty tensor file")
    count = 1
    for s in shape:
        count *= s
    if len(tokens) != count:
        raise ValueError(
            f"{path}: expected {count} values for extents {shape}, "
            f"got {len(tokens)}"
        )
    is_float = any("." in t or "e" in t.lower() for t in tokens)
    dtype = np.float64 if is_float else np.int64
    vals = np.array([float(t) if is_float else int(t) for t in tokens], dtype)
    return vals.reshape(shape)


def save_csv_tensor(path, array: np.ndarray) -> None:
    arr = np.asarray(array)
    with open(path, "w") as fh:
        fh.write(" ".join(str(s) for s in arr.shape) + "\n")
        flat = arr.reshape(-1)
        for i in range(0, flat.size, 16):
            fh.write(" ".join(str(v) for v in flat[i:i + 16]) + "\n")
