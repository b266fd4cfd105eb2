"""Synthetic pipeline fixture: videos with planted ground-truth windows.

Construction: each video's frames inside its ground-truth window cluster
around a hidden direction; all other frames are random unit vectors. The
"fused" summary embedding is the normalized mean of the in-window frames
plus component noise (sigma configurable), so ranking it against the track
recovers the window. One expert ("delta") is adversarially orthogonal to
every frame; the corrupted 4-expert fusion embedding leans toward a decoy
out-of-window frame, which is what the filtering ablation detects.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from vidfuse.cache import cache_store
from vidfuse.retrieval import FrameEmbeddingTrack, sample_frame_times

GOOD_EXPERTS = ("alpha", "bravo", "charlie")
OUTLIER_EXPERT = "delta"
MODEL_NAME = "mock-clip"

_EXPERT_TEXT_RE = re.compile(r"expert (\w+) describing video ([\w-]+)")


def expert_text(expert_id: str, video_id: str) -> str:
    return f"expert {expert_id} describing video {video_id}"


def fused_text(expert_ids, video_id: str) -> str:
    return f"fused {'+'.join(sorted(expert_ids))} for {video_id}"


def chat_responder(prompt: str) -> str:
    """Deterministic mock fusion: names the experts found in the prompt."""
    matches = _EXPERT_TEXT_RE.findall(prompt)
    if not matches:
        return "fused nothing"
    ids = sorted({expert for expert, _ in matches})
    video_id = matches[0][1]
    return fused_text(ids, video_id)


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


@dataclass
class SynthVideo:
    video_id: str
    query_id: str
    gt_start: float
    gt_end: float
    track: FrameEmbeddingTrack
    clean_summary_emb: np.ndarray
    corrupted_summary_emb: np.ndarray
    expert_embeddings: dict[str, np.ndarray]
    gt_frame_indices: list[int]


@dataclass
class SynthFixture:
    videos: list[SynthVideo]
    summaries_path: Path
    annotations_path: Path
    cache_dir: Path
    embed_map: dict[str, list[float]]
    dim: int

    def config_dict(self, base_url: str, out_dir: Path, **overrides) -> dict:
        provider = {
            "base_url": base_url,
            "model_name": MODEL_NAME,
            "timeout": 10.0,
            "max_retries": 1,
            "max_concurrent": 4,
            "backoff_base": 0.001,
            "backoff_cap": 0.002,
        }
        cfg = {
            "paths": {
                "summaries": str(self.summaries_path),
                "cache_dir": str(self.cache_dir),
                "annotations": str(self.annotations_path),
                "annotations_format": "canonical_jsonl",
                "out_dir": str(out_dir),
            },
            "filter_strategy": "avg_clip",
            "cooperate_strategy": "common_ground",
            "k_mode": "fraction",
            "k_value": 0.2,
            "gap_tolerance_frames": 0,
            "thresholds": [0.3, 0.5, 0.7],
            "parallelism": 2,
            "providers": {"embedder": provider, "fusion_llm": dict(provider)},
        }
        cfg.update(overrides)
        return cfg

    def write_config(self, path: Path, base_url: str, out_dir: Path, **overrides) -> Path:
        path.write_text(
            json.dumps(self.config_dict(base_url, out_dir, **overrides), indent=2),
            encoding="utf-8",
        )
        return path


def build_fixture(
    root: Path,
    n_videos: int = 20,
    duration: float = 60.0,
    interval: float = 2.0,
    dim: int = 16,
    gt_frames: int = 6,
    noise_sigma: float = 0.05,
    seed: int = 7,
) -> SynthFixture:
    rng = np.random.default_rng(seed)
    times = np.asarray(sample_frame_times(duration, interval))
    n_frames = len(times)
    cache_dir = root / "caches"
    cache_dir.mkdir(parents=True, exist_ok=True)

    videos: list[SynthVideo] = []
    embed_map: dict[str, list[float]] = {}
    summary_lines: list[str] = []
    annotation_lines: list[str] = []

    for v in range(n_videos):
        video_id = f"vid{v:03d}"
        base = _unit(rng.standard_normal(dim))
        start_idx = int(rng.integers(0, n_frames - gt_frames + 1))
        gt_idx = list(range(start_idx, start_idx + gt_frames))

        vectors = np.empty((n_frames, dim), dtype=np.float64)
        for i in range(n_frames):
            if i in gt_idx:
                vectors[i] = _unit(base + 0.15 * rng.standard_normal(dim))
            else:
                vectors[i] = _unit(rng.standard_normal(dim))
        track = FrameEmbeddingTrack(
            video_id=video_id,
            interval_sec=interval,
            duration_sec=duration,
            times=times.copy(),
            vectors=vectors.astype(np.float32),
            model_name=MODEL_NAME,
        )
        cache_store(track, cache_dir / f"{video_id}.emb")

        window_mean = vectors[gt_idx].mean(axis=0)
        clean = _unit(_unit(window_mean) + noise_sigma * rng.standard_normal(dim))

        # decoy frame at least 2 indices away from the window on either side
        decoy_choices = [
            i for i in range(n_frames)
            if i < start_idx - 2 or i > gt_idx[-1] + 2
        ]
        decoy = int(rng.choice(decoy_choices))
        corrupted = _unit(_unit(window_mean) + 1.4 * vectors[decoy])

        expert_embeddings = {}
        for expert in GOOD_EXPERTS:
            expert_embeddings[expert] = _unit(base + 0.2 * rng.standard_normal(dim))
        # outlier: the direction least aligned with every frame (smallest
        # right-singular vector; exactly orthogonal to all when dim > n_frames)
        _, _, vt = np.linalg.svd(vectors, full_matrices=True)
        expert_embeddings[OUTLIER_EXPERT] = _unit(vt[-1])

        for expert, emb in expert_embeddings.items():
            text = expert_text(expert, video_id)
            embed_map[text] = emb.tolist()
            summary_lines.append(json.dumps({
                "video_id": video_id,
                "expert_id": expert,
                "text": text,
                "used_audio": expert == "bravo",
            }))
        embed_map[fused_text(GOOD_EXPERTS, video_id)] = clean.tolist()
        embed_map[fused_text(GOOD_EXPERTS + (OUTLIER_EXPERT,), video_id)] = corrupted.tolist()

        gt_start = float(times[start_idx])
        gt_end = float(min(times[gt_idx[-1]] + interval, duration))
        annotation_lines.append(json.dumps({
            "query_id": f"q-{video_id}",
            "video_id": video_id,
            "query_text": f"the planted moment of {video_id}",
            "duration_sec": duration,
            "windows": [[gt_start, gt_end]],
        }))

        videos.append(SynthVideo(
            video_id=video_id,
            query_id=f"q-{video_id}",
            gt_start=gt_start,
            gt_end=gt_end,
            track=track,
            clean_summary_emb=clean,
            corrupted_summary_emb=corrupted,
            expert_embeddings=expert_embeddings,
            gt_frame_indices=gt_idx,
        ))

    summaries_path = root / "expert_summaries.jsonl"
    summaries_path.write_text("\n".join(summary_lines) + "\n", encoding="utf-8")
    annotations_path = root / "annotations.jsonl"
    annotations_path.write_text("\n".join(annotation_lines) + "\n", encoding="utf-8")

    return SynthFixture(
        videos=videos,
        summaries_path=summaries_path,
        annotations_path=annotations_path,
        cache_dir=cache_dir,
        embed_map=embed_map,
        dim=dim,
    )


def embed_responder(fixture: SynthFixture):
    """embed_fn for MockProviderServer: exact map lookup, no fallbacks."""

    def fn(text: str) -> list[float]:
        if text not in fixture.embed_map:
            raise KeyError(f"mock embedder has no vector for text: {text!r}")
        return fixture.embed_map[text]

    return fn
