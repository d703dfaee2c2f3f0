"""Portable binary array container (``.arr``).

Layout: an 8-byte little-endian unsigned header length, the UTF-8 JSON
header, then the raw payload. The header records dtype (``"c64"`` for
complex pairs of 64-bit floats, ``"f64"``, ``"u8"``), shape, row-major
layout, little-endian byte order, and a free-form semantic tag.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

_DTYPES = {"c64": np.dtype("<c16"), "f64": np.dtype("<f8"), "u8": np.dtype("u1")}
_LABELS = {np.dtype("complex128"): "c64", np.dtype("float64"): "f64", np.dtype("uint8"): "u8"}


def dtype_label(arr: np.ndarray) -> str:
    label = _LABELS.get(arr.dtype)
    if label is None:
        raise ValueError(f"unsupported dtype {arr.dtype}; use complex128, float64 or uint8")
    return label


def write_array(path: str | Path, arr: np.ndarray, semantic: str) -> None:
    """Write an array with its self-describing header."""
    label = dtype_label(np.asarray(arr))
    header = {
        "dtype": label,
        "shape": [int(s) for s in arr.shape],
        "layout": "row-major",
        "byte_order": "little-endian",
        "semantic": semantic,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    payload = np.ascontiguousarray(arr).astype(_DTYPES[label]).tobytes()
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        fh.write(payload)


def read_array(path: str | Path) -> tuple[np.ndarray, dict]:
    """Read an array, validating the payload length against the header."""
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise ValueError(f"{path}: truncated container")
    (header_len,) = struct.unpack("<Q", raw[:8])
    if len(raw) < 8 + header_len:
        raise ValueError(f"{path}: header extends past end of file")
    header = json.loads(raw[8 : 8 + header_len].decode("utf-8"))
    if header.get("dtype") not in _DTYPES:
        raise ValueError(f"{path}: unknown dtype {header.get('dtype')!r}")
    dtype = _DTYPES[header["dtype"]]
    shape = tuple(int(s) for s in header["shape"])
    expected = dtype.itemsize * int(np.prod(shape)) if shape else dtype.itemsize
    payload = raw[8 + header_len :]
    if len(payload) != expected:
        raise ValueError(
            f"{path}: payload length {len(payload)} != expected {expected} "
            f"for dtype {header['dtype']} and shape {shape}"
        )
    arr = np.frombuffer(payload, dtype=dtype).reshape(shape)
    return arr.copy(), header
