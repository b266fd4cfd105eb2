from pathlib import Path

import cv2
import numpy as np
import pytest


def frame_gray_level(index: int) -> int:
    """Solid gray level encoding the frame index; step 16 >> MJPG noise."""
    return (index * 16) % 256


def write_test_video(path: Path, duration_sec: float = 10.0, fps: float = 10.0,
                     size=(64, 48)) -> Path:
    """MJPG AVI of solid frames whose gray level encodes the frame index."""
    w, h = size
    writer = cv2.VideoWriter(str(path), cv2.VideoWriter_fourcc(*"MJPG"), fps, (w, h))
    assert writer.isOpened(), "opencv cannot write MJPG AVI in this environment"
    n = int(round(duration_sec * fps))
    for i in range(n):
        frame = np.full((h, w, 3), frame_gray_level(i), dtype=np.uint8)
        writer.write(frame)
    writer.release()
    return path


@pytest.fixture
def test_video(tmp_path):
    return write_test_video(tmp_path / "clip.avi")
