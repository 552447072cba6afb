"""Versioned single-file persistence for trained models.

Layout: magic line, 8-byte big-endian length + JSON metadata (sorted keys),
then one 8-byte length + raw .npy blob per array, in the order listed under
meta["arrays"]. Writing the same model twice produces identical bytes
(no timestamps, unlike zip-based formats).
"""

from __future__ import annotations

import io
import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"VAFUSION1\n"


def save_container(path: str | Path, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    meta = dict(meta)
    meta["arrays"] = sorted(arrays)
    with Path(path).open("wb") as fh:
        fh.write(MAGIC)
        blob = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
        fh.write(struct.pack(">Q", len(blob)))
        fh.write(blob)
        for name in meta["arrays"]:
            buf = io.BytesIO()
            np.save(buf, np.ascontiguousarray(arrays[name]))
            data = buf.getvalue()
            fh.write(struct.pack(">Q", len(data)))
            fh.write(data)


def load_container(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    with Path(path).open("rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise ValueError(f"{path}: not a vafusion container")
        (meta_len,) = struct.unpack(">Q", fh.read(8))
        meta = json.loads(fh.read(meta_len).decode("utf-8"))
        arrays = {}
        for name in meta["arrays"]:
            (size,) = struct.unpack(">Q", fh.read(8))
            arrays[name] = np.load(io.BytesIO(fh.read(size)))
    return meta, arrays
