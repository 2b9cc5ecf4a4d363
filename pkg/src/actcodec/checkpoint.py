"""Versioned binary checkpoint container.

Layout: an 8-byte magic, a little-endian u32 header length, a JSON header
(format version, free-form metadata, and an array manifest with dtype,
shape, and byte offsets), then the raw little-endian array payload. Arrays
round-trip bit-exactly; loading a file with a different format version
fails with a descriptive error.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

CKPT_MAGIC = b"ACODEC\x00\x01"
CKPT_VERSION = 1

_ALLOWED = {"<f4", "<f8", "<i4", "<i8", "|b1"}


def _wire_dtype(arr: np.ndarray) -> str:
    dt = arr.dtype.newbyteorder("<") if arr.dtype.byteorder == ">" else arr.dtype
    code = dt.str
    if code == "=b1" or code == "<b1":
        code = "|b1"
    if code not in _ALLOWED:
        raise ValueError(f"unsupported checkpoint dtype {arr.dtype}")
    return code


def save_checkpoint(path: str | Path, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    manifest = []
    offset = 0
    blobs = []
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        code = _wire_dtype(arr)
        blob = arr.astype(code, copy=False).tobytes()
        manifest.append({"name": name, "dtype": code, "shape": list(arr.shape), "offset": offset})
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps({"version": CKPT_VERSION, "meta": meta, "arrays": manifest}).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:8] != CKPT_MAGIC:
        raise ValueError(f"{path}: not an actcodec checkpoint (bad magic)")
    (header_len,) = struct.unpack_from("<I", data, 8)
    header = json.loads(data[12 : 12 + header_len].decode("utf-8"))
    if header.get("version") != CKPT_VERSION:
        raise ValueError(
            f"{path}: checkpoint format version {header.get('version')} is not "
            f"supported (this build reads version {CKPT_VERSION})"
        )
    base = 12 + header_len
    arrays = {}
    for entry in header["arrays"]:
        dtype = np.dtype(entry["dtype"])
        count = int(np.prod(entry["shape"], dtype=np.int64)) if entry["shape"] else 1
        arr = np.frombuffer(data, dtype=dtype, count=count, offset=base + entry["offset"])
        arrays[entry["name"]] = arr.reshape(entry["shape"]).copy()
    return header["meta"], arrays
