"""Frame sampling, similarity ranking, and span assembly.

A video is represented as a track of fixed-interval frame embeddings.
Ranking a summary embedding against the track yields an ordering of frame
indices; the top-k indices become half-open `[start, end)` spans in seconds.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EmptySpanSet,
    EmptyTrack,
    IndexOutOfRange,
    KOutOfRange,
    NonPositiveDuration,
)
from .vectors import cosine_to_many

# Unit-norm tolerance for track rows (float32 rounding of unit f64 vectors
# stays well inside this).
UNIT_NORM_TOL = 1e-4

# Relative slack when deciding whether i*interval is still < duration.
_TIME_EPS = 1e-9


def sample_frame_times(duration_sec: float, interval_sec: float = 2.0) -> list[float]:
    """Timestamps 0, interval, 2*interval, ... strictly below duration.

    Frame i covers [t_i, min(t_i + interval, duration)). Raises
    NonPositiveDuration on non-positive inputs.
    """
    if duration_sec <= 0:
        raise NonPositiveDuration(f"duration must be > 0, got {duration_sec}")
    if interval_sec <= 0:
        raise NonPositiveDuration(f"interval must be > 0, got {interval_sec}")
    limit = duration_sec - _TIME_EPS * max(1.0, duration_sec)
    times: list[float] = []
    i = 0
    while i * interval_sec < limit:
        times.append(i * interval_sec)
        i += 1
    return times


@dataclass
class FrameEmbeddingTrack:
    """Per-video sequence of timestamped, unit-normalized frame embeddings.

    `times` is float64 shape (n,); `vectors` is float32 shape (n, dim).
    `model_name` records which encoder produced the vectors so mixed-model
    comparisons can be refused downstream.
    """

    video_id: str
    interval_sec: float
    duration_sec: float
    times: np.ndarray
    vectors: np.ndarray
    model_name: str | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.vectors = np.asarray(self.vectors, dtype=np.float32)
        self.validate()

    def validate(self) -> None:
        if self.interval_sec <= 0 or self.duration_sec <= 0:
            raise NonPositiveDuration(
                f"interval/duration must be > 0, got {self.interval_sec}/{self.duration_sec}"
            )
        if self.times.ndim != 1 or self.vectors.ndim != 2:
            raise ValueError("times must be 1-D and vectors 2-D")
        n = self.times.shape[0]
        if n == 0:
            raise EmptyTrack(f"track for {self.video_id!r} has no frames")
        if self.vectors.shape[0] != n:
            raise ValueError("times and vectors disagree on frame count")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        if np.any(self.times >= self.duration_sec):
            raise ValueError("timestamps must all be < duration")
        steps = self.times / self.interval_sec
        if np.max(np.abs(steps - np.round(steps))) > 1e-6:
            raise ValueError("timestamps must be multiples of the interval")
        norms = np.linalg.norm(self.vectors.astype(np.float64), axis=1)
        if np.max(np.abs(norms - 1.0)) > UNIT_NORM_TOL:
            raise ValueError("frame embeddings must be unit-normalized")

    @property
    def n_frames(self) -> int:
        return int(self.times.shape[0])

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    def frames(self):
        """Iterate (t_start, embedding) pairs."""
        for i in range(self.n_frames):
            yield float(self.times[i]), self.vectors[i]

    def frame_end(self, index: int) -> float:
        """End of the interval covered by frame `index`, clipped to duration."""
        return min(float(self.times[index]) + self.interval_sec, self.duration_sec)


@dataclass(frozen=True)
class Span:
    """Half-open interval [start, end) in seconds."""

    start: float
    end: float

    def __post_init__(self):
        if not (0 <= self.start < self.end):
            raise ValueError(f"invalid span [{self.start}, {self.end})")

    @property
    def length(self) -> float:
        return self.end - self.start


@dataclass
class SpanSet:
    """Disjoint, start-sorted collection of spans."""

    spans: list[Span] = field(default_factory=list)

    @classmethod
    def from_pairs(cls, pairs) -> "SpanSet":
        """Build a normalized set from (start, end) pairs; empty/inverted pairs are rejected."""
        return cls([Span(float(s), float(e)) for s, e in pairs]).normalize()

    def normalize(self) -> "SpanSet":
        """Sort by start and merge overlapping or touching spans. Idempotent."""
        if not self.spans:
            return SpanSet([])
        ordered = sorted(self.spans, key=lambda s: (s.start, s.end))
        merged: list[Span] = [ordered[0]]
        for span in ordered[1:]:
            last = merged[-1]
            if span.start <= last.end + 1e-12:
                if span.end > last.end:
                    merged[-1] = Span(last.start, span.end)
            else:
                merged.append(span)
        return SpanSet(merged)

    def is_normalized(self) -> bool:
        for prev, cur in zip(self.spans, self.spans[1:]):
            if cur.start <= prev.end + 1e-12:
                return False
        return True

    def total_length(self) -> float:
        return sum(s.length for s in self.spans)

    def to_pairs(self) -> list[list[float]]:
        return [[s.start, s.end] for s in self.spans]

    def __len__(self) -> int:
        return len(self.spans)

    def __bool__(self) -> bool:
        return bool(self.spans)


@dataclass
class RankedKeyframes:
    """Full descending-similarity ordering of a track's frame indices.

    `order[j]` is the index of the j-th most similar frame; `scores[j]` its
    similarity. Ties are broken by ascending timestamp. `times` carries the
    track's per-index timestamps so spans can be located without the track.
    """

    order: np.ndarray
    scores: np.ndarray
    times: np.ndarray
    k: int

    def __post_init__(self):
        self.order = np.asarray(self.order, dtype=np.int64)
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.times = np.asarray(self.times, dtype=np.float64)
        if np.any(np.diff(self.scores) > 1e-12):
            raise ValueError("scores must be non-increasing along the order")
        if not (1 <= self.k <= self.order.shape[0]):
            raise KOutOfRange(f"k={self.k} outside [1, {self.order.shape[0]}]")


def rank_frames(summary_emb, track: FrameEmbeddingTrack) -> RankedKeyframes:
    """Order all frame indices by descending similarity to the summary.

    Stable tie-break toward the earlier timestamp; top-k is a prefix of the
    ordering for every k.
    """
    if track.n_frames == 0:  # defensive; track validation already forbids this
        raise EmptyTrack(f"track for {track.video_id!r} has no frames")
    sims = cosine_to_many(summary_emb, track.vectors)
    order = np.argsort(-sims, kind="stable")
    return RankedKeyframes(
        order=order, scores=sims[order], times=track.times.copy(), k=track.n_frames
    )


def select_top_k(ranked: RankedKeyframes, k: int) -> set[int]:
    """First k entries of the ordering, as a set of frame indices."""
    n = ranked.order.shape[0]
    if not (1 <= k <= n):
        raise KOutOfRange(f"k={k} outside [1, {n}]")
    return {int(i) for i in ranked.order[:k]}


def keyframes_to_spans(
    indices, track: FrameEmbeddingTrack, gap_tolerance_frames: int = 0
) -> SpanSet:
    """Convert selected frame indices into disjoint second-valued spans.

    Each index i contributes [t_i, t_i + interval) clipped to duration; runs
    whose index gap is <= gap_tolerance_frames merge into one span.
    """
    idxs = sorted(int(i) for i in indices)
    if not idxs:
        return SpanSet([])
    if idxs[0] < 0 or idxs[-1] >= track.n_frames:
        raise IndexOutOfRange(
            f"indices must be within [0, {track.n_frames - 1}], got {idxs[0]}..{idxs[-1]}"
        )
    spans: list[Span] = []
    run_start = idxs[0]
    prev = idxs[0]
    for i in idxs[1:]:
        if i - prev - 1 <= gap_tolerance_frames:
            prev = i
            continue
        spans.append(Span(float(track.times[run_start]), track.frame_end(prev)))
        run_start = i
        prev = i
    spans.append(Span(float(track.times[run_start]), track.frame_end(prev)))
    return SpanSet(spans).normalize()


def primary_span(ranked: RankedKeyframes, spans: SpanSet) -> Span:
    """The span containing the globally highest-similarity frame."""
    if not spans:
        raise EmptySpanSet("no spans to pick a primary from")
    top_t = float(ranked.times[int(ranked.order[0])])
    for span in spans.spans:
        if span.start <= top_t < span.end:
            return span
    raise ValueError(f"top frame at t={top_t} not contained in any span")
