"""Binary on-disk cache for frame embedding tracks.

Byte layout (all integers little-endian):

    offset  size  field
    0       4     magic  b"MVS1"
    4       4     schema_version  uint32  (currently 1)
    8       4     dim             uint32
    12      4     n_frames        uint32
    16      4     metadata_len    uint32
    20      m     metadata        UTF-8 JSON object with keys
                  video_id, interval_sec, duration_sec, model_name
    20+m    8n    timestamps      float64 x n_frames
    ...     4nd   vectors         float32 x n_frames x dim, frame-major
    last 4  4     checksum        uint32 CRC-32 of all preceding bytes

Writes go to a temp file in the target directory followed by an atomic
rename, so readers never observe a partial file.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
import zlib
from pathlib import Path

import numpy as np

from .errors import CorruptFile, SchemaMismatch
from .retrieval import FrameEmbeddingTrack

MAGIC = b"MVS1"
SCHEMA_VERSION = 1

_HEADER = struct.Struct("<4sIIII")


def cache_store(track: FrameEmbeddingTrack, path: str | Path) -> None:
    """Serialize a track; the file appears atomically or not at all."""
    path = Path(path)
    meta = {
        "video_id": track.video_id,
        "interval_sec": track.interval_sec,
        "duration_sec": track.duration_sec,
        "model_name": track.model_name or "unknown",
    }
    meta_blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    header = _HEADER.pack(MAGIC, SCHEMA_VERSION, track.dim, track.n_frames, len(meta_blob))
    times = np.ascontiguousarray(track.times, dtype="<f8").tobytes()
    vectors = np.ascontiguousarray(track.vectors, dtype="<f4").tobytes()
    body = header + meta_blob + times + vectors
    checksum = struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)

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


def cache_load(path: str | Path) -> FrameEmbeddingTrack:
    """Read a cache file back into a validated FrameEmbeddingTrack."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size + 4:
        raise CorruptFile(f"{path}: file shorter than header")
    magic, version, dim, n_frames, meta_len = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise SchemaMismatch(f"{path}: not an embedding cache file (bad magic)")
    if version != SCHEMA_VERSION:
        raise SchemaMismatch(
            f"{path}: schema_version {version} not supported (expected {SCHEMA_VERSION})"
        )
    expected = _HEADER.size + meta_len + 8 * n_frames + 4 * n_frames * dim + 4
    if len(raw) != expected:
        raise CorruptFile(f"{path}: size {len(raw)} != expected {expected} (truncated?)")
    (stored_crc,) = struct.unpack_from("<I", raw, len(raw) - 4)
    actual_crc = zlib.crc32(raw[:-4]) & 0xFFFFFFFF
    if stored_crc != actual_crc:
        raise CorruptFile(f"{path}: checksum mismatch")

    offset = _HEADER.size
    try:
        meta = json.loads(raw[offset : offset + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptFile(f"{path}: unreadable metadata ({exc})") from exc
    offset += meta_len
    times = np.frombuffer(raw, dtype="<f8", count=n_frames, offset=offset).copy()
    offset += 8 * n_frames
    vectors = (
        np.frombuffer(raw, dtype="<f4", count=n_frames * dim, offset=offset)
        .reshape(n_frames, dim)
        .copy()
    )
    try:
        return FrameEmbeddingTrack(
            video_id=str(meta["video_id"]),
            interval_sec=float(meta["interval_sec"]),
            duration_sec=float(meta["duration_sec"]),
            times=times,
            vectors=vectors,
            model_name=str(meta["model_name"]),
        )
    except KeyError as exc:
        raise CorruptFile(f"{path}: metadata missing key {exc}") from exc
    except Exception as exc:
        raise CorruptFile(f"{path}: payload violates track invariants ({exc})") from exc
