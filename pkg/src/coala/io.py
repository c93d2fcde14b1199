"""CLMX binary matrix files and plain CSV import/export.

CLMX layout (little-endian)::

    offset  size  field
    0       4     magic b"CLMX"
    4       1     version (1)
    5       1     dtype code (0 = float32, 1 = float64)
    6       2     reserved, must be 0
    8       8     rows (u64)
    16      8     cols (u64)
    24      ...   rows*cols scalars, row-major
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

from .matcore import CoalaError, Precision, as_array

MAGIC = b"CLMX"
VERSION = 1
HEADER = struct.Struct("<4sBBHQQ")
HEADER_SIZE = HEADER.size
DTYPE_CODES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
CSV_MAX_ENTRIES = 10**6


class ClmxFormatError(CoalaError, ValueError):
    pass


def _code_for(dtype) -> int:
    dtype = np.dtype(dtype)
    if dtype == np.float32:
        return 0
    if dtype == np.float64:
        return 1
    raise ClmxFormatError(f"CLMX stores float32 or float64 only, got {dtype}")


def read_header(path) -> tuple[np.dtype, int, int]:
    with open(path, "rb") as fh:
        raw = fh.read(HEADER_SIZE)
    if len(raw) < HEADER_SIZE:
        raise ClmxFormatError(f"{path}: truncated header ({len(raw)} bytes)")
    magic, version, code, reserved, rows, cols = HEADER.unpack(raw)
    if magic != MAGIC:
        raise ClmxFormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise ClmxFormatError(f"{path}: unsupported version {version}")
    if code not in DTYPE_CODES:
        raise ClmxFormatError(f"{path}: unknown dtype code {code}")
    if reserved != 0:
        raise ClmxFormatError(f"{path}: reserved field must be 0, got {reserved}")
    dtype = DTYPE_CODES[code]
    expected = HEADER_SIZE + rows * cols * dtype.itemsize
    actual = os.path.getsize(path)
    if actual != expected:
        raise ClmxFormatError(f"{path}: size {actual} bytes, header implies {expected}")
    return dtype, rows, cols


def write_clmx(path, matrix) -> Path:
    arr = np.asarray(matrix.array if hasattr(matrix, "array") else matrix)
    if arr.ndim != 2:
        raise ClmxFormatError(f"only 2-D arrays can be written, got shape {arr.shape}")
    code = _code_for(arr.dtype)
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, VERSION, code, 0, arr.shape[0], arr.shape[1]))
        fh.write(np.ascontiguousarray(arr, dtype=DTYPE_CODES[code]).tobytes())
    return path


def create_clmx(path, rows: int, cols: int, dtype=np.float64) -> np.memmap:
    """Create a CLMX file and return a writable memmap over its data block.

    Used to build fixtures larger than memory one block of rows at a time.
    """
    code = _code_for(dtype)
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, VERSION, code, 0, rows, cols))
        fh.truncate(HEADER_SIZE + rows * cols * DTYPE_CODES[code].itemsize)
    return np.memmap(path, dtype=DTYPE_CODES[code], mode="r+", offset=HEADER_SIZE, shape=(rows, cols))


def open_clmx(path) -> np.memmap:
    """Read-only memmap of a CLMX file; nothing is loaded until sliced."""
    dtype, rows, cols = read_header(path)
    if rows * cols == 0:
        return np.zeros((rows, cols), dtype=dtype)
    return np.memmap(path, dtype=dtype, mode="r", offset=HEADER_SIZE, shape=(rows, cols))


def read_clmx(path) -> np.ndarray:
    dtype, rows, cols = read_header(path)
    with open(path, "rb") as fh:
        fh.seek(HEADER_SIZE)
        data = np.fromfile(fh, dtype=dtype, count=rows * cols)
    return data.reshape(rows, cols).astype(dtype.newbyteorder("="), copy=False)


def write_csv(path, matrix) -> Path:
    arr = as_array(matrix)
    if arr.size > CSV_MAX_ENTRIES:
        raise ClmxFormatError(f"CSV export is limited to {CSV_MAX_ENTRIES} entries, matrix has {arr.size}")
    fmt = "%.9g" if arr.dtype == np.float32 else "%.17g"
    np.savetxt(path, arr, fmt=fmt, delimiter=",")
    return Path(path)


def read_csv(path, precision="double") -> np.ndarray:
    arr = np.loadtxt(path, delimiter=",", dtype=Precision.parse(precision).dtype, ndmin=2)
    if arr.size > CSV_MAX_ENTRIES:
        raise ClmxFormatError(f"CSV import is limited to {CSV_MAX_ENTRIES} entries, file has {arr.size}")
    return as_array(arr, str(path))
