"""Self-describing binary checkpoint container.

Layout: 4-byte magic, 8-byte little-endian header length, UTF-8 JSON
header, then the raw array bytes back to back. The header carries
arbitrary JSON metadata plus one entry per array (name, dtype, shape,
offset). Round trips are bit-exact.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"MXCK"
VERSION = 1


def _little_endian(arr: np.ndarray) -> np.ndarray:
    if arr.dtype.byteorder == ">":
        return arr.astype(arr.dtype.newbyteorder("<"))
    return arr


def save_checkpoint(path, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    entries = []
    blobs = []
    offset = 0
    for name, arr in arrays.items():
        # tobytes() yields C-order bytes for any layout, including 0-d
        arr = _little_endian(np.asarray(arr))
        raw = arr.tobytes()
        entries.append(
            {
                "name": name,
                "dtype": arr.dtype.str.replace("=", "<"),
                "shape": list(arr.shape),
                "offset": offset,
                "nbytes": len(raw),
            }
        )
        blobs.append(raw)
        offset += len(raw)
    header = json.dumps({"version": VERSION, "meta": meta, "arrays": entries}).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(header)))
        f.write(header)
        for raw in blobs:
            f.write(raw)


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    """Returns (metadata, arrays by name). Arrays are fresh writable copies."""
    blob = Path(path).read_bytes()
    if blob[:4] != MAGIC:
        raise ValueError(f"{path} is not a checkpoint file (bad magic)")
    (header_len,) = struct.unpack("<Q", blob[4:12])
    header = json.loads(blob[12 : 12 + header_len].decode("utf-8"))
    if header.get("version") != VERSION:
        raise ValueError(f"unsupported checkpoint version {header.get('version')}")
    base = 12 + header_len
    arrays = {}
    for e in header["arrays"]:
        arr = np.frombuffer(
            blob,
            dtype=np.dtype(e["dtype"]),
            count=int(np.prod(e["shape"], dtype=np.int64)) if e["shape"] else 1,
            offset=base + e["offset"],
        )
        arrays[e["name"]] = arr.reshape(e["shape"]).copy()
    return header["meta"], arrays
