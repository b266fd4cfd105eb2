"""Export pipeline tests, including the cross-component golden checks
against the consumer package (vidfuse)."""

import numpy as np
import pytest

import vidfuse
from vidfuse.cache import cache_load

from vidfuse_exporter.backends import HashBackend
from vidfuse_exporter.cli import export_video, main
from vidfuse_exporter.errors import DecodeError
from vidfuse_exporter.video import extract_frames, probe, sample_times

from .conftest import write_test_video


def test_probe_reads_duration(test_video):
    fps, n, duration = probe(str(test_video))
    assert fps == pytest.approx(10.0)
    assert n == 100
    assert duration == pytest.approx(10.0)


def test_sample_times_match_consumer_rule():
    for duration, interval in ((10.0, 2.0), (9.0, 2.0), (1.5, 2.0), (60.0, 2.0), (7.3, 1.5)):
        assert sample_times(duration, interval) == vidfuse.sample_frame_times(duration, interval)


def test_extract_picks_first_frame_at_or_after_target(test_video):
    from .conftest import frame_gray_level

    times, frames, duration = extract_frames(str(test_video), 2.0)
    assert times == [0.0, 2.0, 4.0, 6.0, 8.0]
    assert duration == pytest.approx(10.0)
    # at 10 fps, target t lands exactly on frame index 10*t; solid frames
    # survive MJPG within a few gray levels, far under the 16-step encoding
    for t, frame in zip(times, frames):
        expected = frame_gray_level(int(round(t * 10)))
        assert abs(float(frame.mean()) - expected) < 6


def test_export_golden_cache(test_video, tmp_path):
    out = tmp_path / "clip.emb"
    n = export_video(str(test_video), "clip", 2.0, "hash:16", str(out))
    assert n == 5

    track = cache_load(out)  # loads cleanly in the consumer package
    assert track.video_id == "clip"
    assert track.n_frames == 5
    assert track.dim == 16
    assert track.model_name == "hash:16"
    assert track.times.tolist() == vidfuse.sample_frame_times(10.0, 2.0)
    norms = np.linalg.norm(track.vectors.astype(np.float64), axis=1)
    assert np.max(np.abs(norms - 1.0)) <= 1e-5


def test_reexport_is_deterministic(test_video, tmp_path):
    a, b = tmp_path / "a.emb", tmp_path / "b.emb"
    export_video(str(test_video), "clip", 2.0, "hash:16", str(a))
    export_video(str(test_video), "clip", 2.0, "hash:16", str(b))
    ta, tb = cache_load(a), cache_load(b)
    assert ta.times.tolist() == tb.times.tolist()
    assert np.max(np.abs(ta.vectors - tb.vectors)) <= 1e-5


def test_corrupt_video_no_partial_output(tmp_path):
    fake = tmp_path / "broken.avi"
    fake.write_bytes(b"this is not a video file at all")
    out = tmp_path / "broken.emb"
    with pytest.raises(DecodeError):
        export_video(str(fake), "broken", 2.0, "hash:16", str(out))
    assert not out.exists()
    assert list(tmp_path.glob("*.tmp")) == []


def test_cli_export_round_trip(tmp_path):
    video = write_test_video(tmp_path / "v.avi", duration_sec=6.0, fps=5.0)
    out = tmp_path / "v.emb"
    code = main([
        "export", "--video", str(video), "--id", "v", "--interval", "2.0",
        "--model", "hash:8", "--out", str(out),
    ])
    assert code == 0
    track = cache_load(out)
    assert track.n_frames == 3
    assert track.dim == 8


def test_cli_export_decode_error_exit_code(tmp_path):
    fake = tmp_path / "x.avi"
    fake.write_bytes(b"nope")
    code = main([
        "export", "--video", str(fake), "--id", "x", "--out", str(tmp_path / "x.emb"),
    ])
    assert code == 1


def test_hash_backend_text_determinism():
    backend = HashBackend(16)
    a = backend.embed_texts(["same text", "other text"])
    b = backend.embed_texts(["same text", "other text"])
    assert np.array_equal(a, b)
    assert not np.allclose(a[0], a[1])
    assert np.linalg.norm(a, axis=1) == pytest.approx([1.0, 1.0], abs=1e-6)


def test_clip_backend_unavailable_model_raises(monkeypatch):
    from vidfuse_exporter.backends import get_backend
    from vidfuse_exporter.errors import ModelLoadError
    monkeypatch.setenv("HF_HUB_OFFLINE", "1")
    monkeypatch.setenv("TRANSFORMERS_OFFLINE", "1")
    with pytest.raises(ModelLoadError):
        get_backend("definitely/not-a-real-checkpoint")
