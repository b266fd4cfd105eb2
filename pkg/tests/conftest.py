import numpy as np
import pytest

from vidfuse.retrieval import FrameEmbeddingTrack


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


def unit_rows(rng, n: int, dim: int) -> np.ndarray:
    m = rng.standard_normal((n, dim))
    return (m / np.linalg.norm(m, axis=1, keepdims=True)).astype(np.float32)


def make_track(rng, n: int = 10, dim: int = 8, interval: float = 2.0,
               video_id: str = "v1", vectors: np.ndarray | None = None,
               model_name: str | None = "test-model") -> FrameEmbeddingTrack:
    if vectors is None:
        vectors = unit_rows(rng, n, dim)
    times = np.arange(n, dtype=np.float64) * interval
    return FrameEmbeddingTrack(
        video_id=video_id,
        interval_sec=interval,
        duration_sec=n * interval,
        times=times,
        vectors=vectors,
        model_name=model_name,
    )
