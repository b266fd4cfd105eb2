"""Embedding backends: a deterministic hash model and real CLIP.

Model names select the backend: `hash:<dim>` is a dependency-free
deterministic encoder (content-hash seeded unit vectors) for tests and
offline runs; anything else is treated as a Hugging Face CLIP checkpoint
loaded through transformers.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .errors import ModelLoadError


def _unit_rows(m: np.ndarray) -> np.ndarray:
    return (m / np.linalg.norm(m, axis=1, keepdims=True)).astype(np.float32)


def _seeded_unit(seed_bytes: bytes, dim: int) -> np.ndarray:
    seed = int.from_bytes(hashlib.sha256(seed_bytes).digest()[:8], "big")
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


class HashBackend:
    """Deterministic stand-in encoder; stable across runs and platforms."""

    def __init__(self, dim: int = 16):
        if dim < 1:
            raise ValueError(f"dim must be >= 1, got {dim}")
        self.dim = dim
        self.model_name = f"hash:{dim}"

    def embed_texts(self, texts: list[str]) -> np.ndarray:
        rows = [_seeded_unit(t.encode("utf-8"), self.dim) for t in texts]
        return _unit_rows(np.vstack(rows))

    def embed_images(self, images: list[np.ndarray]) -> np.ndarray:
        rows = []
        for img in images:
            # thumbnail in coarse buckets so re-decodes hash identically
            small = self._thumbnail(img)
            rows.append(_seeded_unit(small.tobytes(), self.dim))
        return _unit_rows(np.vstack(rows))

    @staticmethod
    def _thumbnail(img: np.ndarray, side: int = 8) -> np.ndarray:
        h, w = img.shape[:2]
        ys = np.linspace(0, h - 1, side).astype(int)
        xs = np.linspace(0, w - 1, side).astype(int)
        gray = img[ys][:, xs].astype(np.float64)
        if gray.ndim == 3:
            gray = gray.mean(axis=2)
        return (gray // 16).astype(np.uint8)


class ClipBackend:
    """transformers CLIP checkpoint; deterministic eval-mode inference."""

    def __init__(self, model_name: str):
        self.model_name = model_name
        try:
            import torch
            from transformers import CLIPModel, CLIPProcessor
        except ImportError as exc:
            raise ModelLoadError(f"transformers/torch unavailable: {exc}") from exc
        try:
            self._model = CLIPModel.from_pretrained(model_name)
            self._processor = CLIPProcessor.from_pretrained(model_name)
        except Exception as exc:
            raise ModelLoadError(f"cannot load {model_name!r}: {exc}") from exc
        self._torch = torch
        self._model.eval()
        self.dim = int(self._model.config.projection_dim)

    def embed_texts(self, texts: list[str]) -> np.ndarray:
        inputs = self._processor(text=texts, return_tensors="pt", padding=True, truncation=True)
        with self._torch.no_grad():
            feats = self._model.get_text_features(**inputs)
        return _unit_rows(feats.cpu().numpy())

    def embed_images(self, images: list[np.ndarray]) -> np.ndarray:
        inputs = self._processor(images=list(images), return_tensors="pt")
        with self._torch.no_grad():
            feats = self._model.get_image_features(**inputs)
        return _unit_rows(feats.cpu().numpy())


def get_backend(model_name: str):
    if model_name.startswith("hash:"):
        try:
            dim = int(model_name.split(":", 1)[1])
        except ValueError as exc:
            raise ModelLoadError(f"bad hash backend spec {model_name!r}") from exc
        return HashBackend(dim)
    return ClipBackend(model_name)
