"""Low-level binary helpers for the texbank file formats.

All multi-byte integers and floats are little-endian. Named-array blocks are
sequences of (name, dtype, shape, raw data) records; they are the payload of
the model container sections and deliberately carry no timestamps so that
identical inputs serialize to identical bytes.
"""

from __future__ import annotations

import struct
from typing import BinaryIO

import numpy as np

from .errors import FormatError

_ALLOWED_DTYPES = {"<f4", "<f8", "<i4", "<i8", "<u4", "<u8", "|u1", "|b1"}


def write_u32(f: BinaryIO, value: int) -> None:
    f.write(struct.pack("<I", value))


def write_u64(f: BinaryIO, value: int) -> None:
    f.write(struct.pack("<Q", value))


def write_f32(f: BinaryIO, value: float) -> None:
    f.write(struct.pack("<f", value))


def read_exact(f: BinaryIO, n: int) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise FormatError(f"truncated file: wanted {n} bytes, got {len(data)}")
    return data


def read_u32(f: BinaryIO) -> int:
    return struct.unpack("<I", read_exact(f, 4))[0]


def read_u64(f: BinaryIO) -> int:
    return struct.unpack("<Q", read_exact(f, 8))[0]


def read_f32(f: BinaryIO) -> float:
    return struct.unpack("<f", read_exact(f, 4))[0]


def _dtype_code(arr: np.ndarray) -> str:
    code = arr.dtype.str
    if code in ("|i1", "<i2", "<u2"):
        raise FormatError(f"dtype {code} not supported by the container format")
    if code not in _ALLOWED_DTYPES:
        raise FormatError(f"dtype {code} not supported by the container format")
    return code


def write_named_arrays(f: BinaryIO, arrays: dict[str, np.ndarray]) -> None:
    write_u32(f, len(arrays))
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        code = _dtype_code(arr)
        name_b = name.encode("utf-8")
        write_u32(f, len(name_b))
        f.write(name_b)
        code_b = code.encode("ascii")
        write_u32(f, len(code_b))
        f.write(code_b)
        write_u32(f, arr.ndim)
        for d in arr.shape:
            write_u64(f, d)
        raw = arr.tobytes()
        write_u64(f, len(raw))
        f.write(raw)


def read_named_arrays(f: BinaryIO) -> dict[str, np.ndarray]:
    count = read_u32(f)
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        name = read_exact(f, read_u32(f)).decode("utf-8")
        code = read_exact(f, read_u32(f)).decode("ascii")
        if code not in _ALLOWED_DTYPES:
            raise FormatError(f"unknown dtype code {code!r}")
        ndim = read_u32(f)
        shape = tuple(read_u64(f) for _ in range(ndim))
        nbytes = read_u64(f)
        raw = read_exact(f, nbytes)
        arr = np.frombuffer(raw, dtype=np.dtype(code)).reshape(shape).copy()
        expected = int(np.prod(shape, dtype=np.int64)) * arr.dtype.itemsize
        if nbytes != expected:
            raise FormatError(f"array {name!r}: payload size mismatch")
        out[name] = arr
    return out


def pack_string(text: str) -> np.ndarray:
    """Encode a string as a uint8 array so it fits the named-array format."""
    return np.frombuffer(text.encode("utf-8"), dtype=np.uint8).copy()


def unpack_string(arr: np.ndarray) -> str:
    return bytes(arr.astype(np.uint8).tobytes()).decode("utf-8")
