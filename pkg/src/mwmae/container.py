"""Named-tensor container file.

Layout: an 8-byte little-endian header length, a UTF-8 JSON header mapping
each tensor name to {shape, dtype, byte_offset}, then a payload of
little-endian float32 values. Offsets are relative to the payload start.
Entries are written in sorted name order so identical inputs produce
byte-identical files.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import ContractError

_LEN_FMT = "<Q"
_DTYPE = np.dtype("<f4")


def save_tensors(path: str | Path, tensors: dict[str, np.ndarray]) -> None:
    """Write arrays as float32. Values are downcast from float64."""
    if not tensors:
        raise ContractError("save_tensors: empty tensor dict")
    header: dict[str, dict] = {}
    blobs: list[bytes] = []
    offset = 0
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype=_DTYPE)
        header[name] = {
            "shape": list(arr.shape),
            "dtype": "f32",
            "byte_offset": offset,
        }
        raw = arr.tobytes()
        blobs.append(raw)
        offset += len(raw)
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack(_LEN_FMT, len(head)))
        fh.write(head)
        for raw in blobs:
            fh.write(raw)


def load_tensors(path: str | Path) -> dict[str, np.ndarray]:
    """Read a container; arrays come back as float64."""
    with open(path, "rb") as fh:
        (head_len,) = struct.unpack(_LEN_FMT, fh.read(8))
        header = json.loads(fh.read(head_len).decode("utf-8"))
        payload = fh.read()
    out: dict[str, np.ndarray] = {}
    for name, meta in header.items():
        if meta["dtype"] != "f32":
            raise ContractError(f"unsupported dtype {meta['dtype']!r} for {name!r}")
        shape = tuple(meta["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = meta["byte_offset"]
        arr = np.frombuffer(payload, dtype=_DTYPE, count=count, offset=start)
        out[name] = arr.reshape(shape).astype(np.float64)
    return out
