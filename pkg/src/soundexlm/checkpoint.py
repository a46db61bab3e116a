"""Binary checkpoint container: PFCK1 magic, JSON directory, raw f32 tensors.

Layout: 5 magic bytes, an 8-byte little-endian length, a UTF-8 JSON metadata
block (format version, encoder config, tensor directory with name/shape/
byte-offset), then the tensor payload as little-endian float32, concatenated
in sorted tensor-name order. Bit-exact across platforms.
"""

from __future__ import annotations

import dataclasses
import json
import struct
from pathlib import Path

import numpy as np

from soundexlm.model import EncoderConfig, Params

MAGIC = b"PFCK1"
FORMAT_VERSION = 1


class CorruptCheckpoint(ValueError):
    pass


class VersionMismatch(ValueError):
    pass


def save_checkpoint(params: Params, config: EncoderConfig, path: str | Path) -> None:
    """Write parameters as float32; round-trips float32 params bit-exactly."""
    names = sorted(params)
    directory = []
    offset = 0
    blobs = []
    for name in names:
        arr = np.ascontiguousarray(params[name], dtype="<f4")
        directory.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blobs.append(arr.tobytes())
        offset += arr.nbytes
    meta = {
        "format_version": FORMAT_VERSION,
        "config": dataclasses.asdict(config),
        "tensors": directory,
        "data_bytes": offset,
    }
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(meta_bytes)))
        fh.write(meta_bytes)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path: str | Path) -> tuple[Params, EncoderConfig]:
    raw = Path(path).read_bytes()
    if raw[:5] != MAGIC:
        raise CorruptCheckpoint(f"{path}: bad magic {raw[:5]!r}")
    if len(raw) < 13:
        raise CorruptCheckpoint(f"{path}: truncated header")
    (meta_len,) = struct.unpack("<Q", raw[5:13])
    meta_end = 13 + meta_len
    if len(raw) < meta_end:
        raise CorruptCheckpoint(f"{path}: truncated metadata")
    try:
        meta = json.loads(raw[13:meta_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptCheckpoint(f"{path}: unreadable metadata: {exc}") from exc
    version = meta.get("format_version")
    if version != FORMAT_VERSION:
        raise VersionMismatch(
            f"{path}: format version {version}, expected {FORMAT_VERSION}"
        )
    data = raw[meta_end:]
    if len(data) != meta["data_bytes"]:
        raise CorruptCheckpoint(
            f"{path}: payload is {len(data)} bytes, directory says "
            f"{meta['data_bytes']}"
        )
    params: Params = {}
    for entry in meta["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        end = start + count * 4
        if end > len(data):
            raise CorruptCheckpoint(f"{path}: tensor {entry['name']} out of bounds")
        arr = np.frombuffer(data[start:end], dtype="<f4").reshape(shape)
        params[entry["name"]] = arr.astype(np.float32, copy=True)
    config = EncoderConfig(**meta["config"])
    return params, config
