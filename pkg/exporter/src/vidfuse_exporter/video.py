"""Deterministic fixed-interval frame extraction.

Target timestamps are 0, interval, 2*interval, ... strictly below the
duration (frame count / fps). At each target the selected frame is the
first decoded frame whose presentation time (index / fps) is >= the
target, which is stable across container formats.
"""

from __future__ import annotations

import cv2
import numpy as np

from .errors import DecodeError

_TIME_EPS = 1e-9


def sample_times(duration_sec: float, interval_sec: float) -> list[float]:
    """Multiples of the interval strictly below duration (matches the
    consumer pipeline's sampling rule)."""
    if duration_sec <= 0 or interval_sec <= 0:
        raise ValueError("duration and interval must be > 0")
    limit = duration_sec - _TIME_EPS * max(1.0, duration_sec)
    times = []
    i = 0
    while i * interval_sec < limit:
        times.append(i * interval_sec)
        i += 1
    return times


def probe(video_path: str) -> tuple[float, int, float]:
    """(fps, frame_count, duration_sec) or DecodeError."""
    cap = cv2.VideoCapture(str(video_path))
    try:
        if not cap.isOpened():
            raise DecodeError(f"cannot open video {video_path}")
        fps = cap.get(cv2.CAP_PROP_FPS)
        n = int(cap.get(cv2.CAP_PROP_FRAME_COUNT))
        if fps <= 0 or n <= 0:
            raise DecodeError(f"{video_path}: bad fps ({fps}) or frame count ({n})")
        return float(fps), n, n / float(fps)
    finally:
        cap.release()


def extract_frames(
    video_path: str, interval_sec: float
) -> tuple[list[float], list[np.ndarray], float]:
    """Decode once, picking the first frame at-or-after each target time.

    Returns (timestamps, RGB frames, duration_sec).
    """
    fps, _, duration = probe(video_path)
    targets = sample_times(duration, interval_sec)
    cap = cv2.VideoCapture(str(video_path))
    try:
        picked: list[np.ndarray] = []
        next_target = 0
        index = 0
        while next_target < len(targets):
            ok, frame = cap.read()
            if not ok:
                break
            pts = index / fps
            while next_target < len(targets) and pts >= targets[next_target] - _TIME_EPS:
                picked.append(cv2.cvtColor(frame, cv2.COLOR_BGR2RGB))
                next_target += 1
            index += 1
        if next_target < len(targets):
            raise DecodeError(
                f"{video_path}: decoded {index} frames but needed one at "
                f"t={targets[next_target]:.3f}s"
            )
        return targets, picked, duration
    finally:
        cap.release()
