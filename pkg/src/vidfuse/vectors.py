"""Embedding representation and similarity arithmetic.

Embeddings are *stored* as 1-D float32 numpy arrays (tracks, caches) to
bound memory; similarity math validates inputs and accumulates in float64
without rounding them first. Every ranking decision in the package
ultimately reduces to `cosine_similarity`.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatch, NonFiniteValues, ZeroVector

# Norms below this are treated as zero vectors.
ZERO_NORM_EPS = 1e-12


def _validated(values, dtype) -> np.ndarray:
    arr = np.asarray(values, dtype=dtype)
    if arr.ndim != 1:
        raise ValueError(f"embedding must be 1-D, got shape {arr.shape}")
    if arr.size < 1:
        raise ValueError("embedding must have at least one component")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteValues("embedding contains NaN or Inf")
    return arr


def as_embedding(values) -> np.ndarray:
    """Coerce a sequence of reals into a validated float32 storage vector.

    Raises NonFiniteValues on NaN/Inf, ValueError on empty or non-1-D input.
    """
    return _validated(values, np.float32)


def l2_norm(e) -> float:
    return float(np.linalg.norm(np.asarray(e, dtype=np.float64)))


def normalize(e) -> np.ndarray:
    """Scale to unit L2 norm (float32 storage), preserving direction.

    Raises ZeroVector when the norm is below ZERO_NORM_EPS.
    """
    arr = _validated(e, np.float64)
    norm = float(np.linalg.norm(arr))
    if norm < ZERO_NORM_EPS:
        raise ZeroVector("cannot normalize a zero vector")
    return (arr / norm).astype(np.float32)


def cosine_similarity(a, b) -> float:
    """Cosine of the angle between two vectors, clamped to [-1, 1].

    Inputs need not be unit length. Raises DimensionMismatch or ZeroVector.
    """
    va = _validated(a, np.float64)
    vb = _validated(b, np.float64)
    if va.shape[0] != vb.shape[0]:
        raise DimensionMismatch(f"dims differ: {va.shape[0]} vs {vb.shape[0]}")
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na < ZERO_NORM_EPS or nb < ZERO_NORM_EPS:
        raise ZeroVector("cosine undefined for zero vectors")
    sim = float(va @ vb) / (na * nb)
    return max(-1.0, min(1.0, sim))


def cosine_to_many(query, matrix: np.ndarray) -> np.ndarray:
    """Cosine similarity of one query vector against each row of a matrix.

    Returns float64 scores; a zero query or zero row raises ZeroVector.
    """
    q = _validated(query, np.float64)
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"matrix must be 2-D, got shape {m.shape}")
    if m.shape[1] != q.shape[0]:
        raise DimensionMismatch(f"dims differ: {q.shape[0]} vs {m.shape[1]}")
    qn = float(np.linalg.norm(q))
    if qn < ZERO_NORM_EPS:
        raise ZeroVector("cosine undefined for zero query")
    row_norms = np.linalg.norm(m, axis=1)
    if np.any(row_norms < ZERO_NORM_EPS):
        raise ZeroVector("matrix contains a zero row")
    sims = (m @ q) / (row_norms * qn)
    return np.clip(sims, -1.0, 1.0)
