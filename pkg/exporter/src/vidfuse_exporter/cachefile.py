"""Writer for the consumer pipeline's embedding cache byte layout.

Layout (little-endian): magic "MVS1", schema_version=1 uint32, dim uint32,
n_frames uint32, metadata_len uint32, UTF-8 JSON metadata {video_id,
interval_sec, duration_sec, model_name}, float64 timestamps, float32
frame-major vectors, trailing CRC-32 of everything before it. Written to a
temp file and renamed, so a partial file is never observable.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
import zlib
from pathlib import Path

import numpy as np

MAGIC = b"MVS1"
SCHEMA_VERSION = 1

_HEADER = struct.Struct("<4sIIII")


def write_cache(
    path: str | Path,
    video_id: str,
    interval_sec: float,
    duration_sec: float,
    model_name: str,
    times,
    vectors,
) -> None:
    times = np.ascontiguousarray(times, dtype="<f8")
    vectors = np.ascontiguousarray(vectors, dtype="<f4")
    if vectors.ndim != 2 or times.ndim != 1 or vectors.shape[0] != times.shape[0]:
        raise ValueError("times must be (n,), vectors (n, dim)")
    n_frames, dim = vectors.shape
    meta = json.dumps(
        {
            "video_id": video_id,
            "interval_sec": interval_sec,
            "duration_sec": duration_sec,
            "model_name": model_name,
        },
        sort_keys=True,
    ).encode("utf-8")
    body = (
        _HEADER.pack(MAGIC, SCHEMA_VERSION, dim, n_frames, len(meta))
        + meta
        + times.tobytes()
        + vectors.tobytes()
    )
    checksum = struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(body)
            f.write(checksum)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
