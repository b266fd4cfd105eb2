"""Outlier filtering and cooperative fusion of expert summaries.

Pipeline shape: score every expert summary against the video's frame
embeddings, drop the worst-aligned one, then either fuse the survivors
through an LLM (merge / common_ground) or hand back the best-scored one
(select, no LLM call).
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyResponse,
    MissingEmbedding,
    TemplateTooSmall,
    TooFewSummaries,
    UnknownTemplate,
)
from .retrieval import FrameEmbeddingTrack
from .vectors import cosine_similarity, cosine_to_many

logger = logging.getLogger(__name__)

FUSED_EXPERT_ID = "fused"

_PLACEHOLDER_RE = re.compile(r"\{\{summary_(\d+)\}\}")


class FilterStrategy(str, Enum):
    AVG_CLIP = "avg_clip"
    MIDDLE_FRAME = "middle_frame"
    NONE = "none"


class CooperateStrategy(str, Enum):
    MERGE = "merge"
    COMMON_GROUND = "common_ground"
    SELECT = "select"


@dataclass
class Summary:
    """One expert's textual summary with provenance."""

    expert_id: str
    text: str
    used_audio: bool = False
    embedding: np.ndarray | None = None

    def __post_init__(self):
        if not self.text or not self.text.strip():
            raise ValueError(f"summary text for {self.expert_id!r} is empty")


@dataclass
class SummarySet:
    """Ordered summaries, optionally with a parallel score list."""

    items: list[Summary]
    scores: list[float] | None = None

    def __post_init__(self):
        ids = [s.expert_id for s in self.items]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate expert ids in summary set: {ids}")
        if self.scores is not None and len(self.scores) != len(self.items):
            raise ValueError("scores must parallel items")

    def __len__(self) -> int:
        return len(self.items)


@dataclass
class FilterOutcome:
    """Result of one outlier-filtering pass.

    `scores` parallels the *input* set; `removed_index` points into it.
    `retained` carries the survivors with their scores, so Select can run
    later without recomputation.
    """

    retained: SummarySet
    removed_index: int | None
    scores: list[float]
    strategy: FilterStrategy


@dataclass
class CooperationRequest:
    """A rendered fusion prompt plus the inputs that produced it."""

    strategy: CooperateStrategy
    prompt_template_id: str
    rendered_prompt: str
    inputs: SummarySet


def average_expert_score(s: Summary, frames: FrameEmbeddingTrack) -> float:
    """Mean cosine similarity of the summary embedding over all frames."""
    if s.embedding is None:
        raise MissingEmbedding(f"summary {s.expert_id!r} has no embedding")
    if np.asarray(s.embedding).shape[-1] != frames.dim:
        raise DimensionMismatch(
            f"summary dim {np.asarray(s.embedding).shape[-1]} vs track dim {frames.dim}"
        )
    sims = cosine_to_many(s.embedding, frames.vectors)
    return float(np.mean(sims))


def _filter_by_scores(
    summary_set: SummarySet, scores: list[float], strategy: FilterStrategy
) -> FilterOutcome:
    if len(summary_set) < 3:
        raise TooFewSummaries(f"need >= 3 summaries to filter, got {len(summary_set)}")
    removed = int(np.argmin(scores))  # ties break toward the lowest index
    retained_items = [s for i, s in enumerate(summary_set.items) if i != removed]
    retained_scores = [c for i, c in enumerate(scores) if i != removed]
    logger.info(
        "event=filter_outlier strategy=%s removed_expert=%s removed_index=%d",
        strategy.value,
        summary_set.items[removed].expert_id,
        removed,
    )
    return FilterOutcome(
        retained=SummarySet(retained_items, retained_scores),
        removed_index=removed,
        scores=list(scores),
        strategy=strategy,
    )


def filter_outlier_avg(summary_set: SummarySet, frames: FrameEmbeddingTrack) -> FilterOutcome:
    """Drop the summary with the lowest mean similarity over all frames."""
    scores = [average_expert_score(s, frames) for s in summary_set.items]
    return _filter_by_scores(summary_set, scores, FilterStrategy.AVG_CLIP)


def filter_outlier_middle_frame(
    summary_set: SummarySet, frames: FrameEmbeddingTrack
) -> FilterOutcome:
    """Drop the summary least similar to the middle sampled frame (index n//2)."""
    middle = frames.vectors[frames.n_frames // 2]
    scores = []
    for s in summary_set.items:
        if s.embedding is None:
            raise MissingEmbedding(f"summary {s.expert_id!r} has no embedding")
        scores.append(cosine_similarity(s.embedding, middle))
    return _filter_by_scores(summary_set, scores, FilterStrategy.MIDDLE_FRAME)


DEFAULT_TEMPLATE_IDS = {
    CooperateStrategy.MERGE: "merge_v1",
    CooperateStrategy.COMMON_GROUND: "common_ground_v1",
}


def load_template(template_id: str, templates_dir: str | Path | None = None) -> str:
    """Fetch template text by id, from a directory or the packaged set."""
    if templates_dir is not None:
        path = Path(templates_dir) / f"{template_id}.txt"
        if not path.is_file():
            raise UnknownTemplate(f"no template file {path}")
        return path.read_text(encoding="utf-8")
    ref = resources.files("vidfuse").joinpath(f"templates/{template_id}.txt")
    if not ref.is_file():
        raise UnknownTemplate(f"no packaged template {template_id!r}")
    return ref.read_text(encoding="utf-8")


def _fill_template(template_text: str, texts: list[str]) -> str:
    """Substitute numbered `{{summary_k}}` placeholders with summary texts.

    Template lines whose placeholders index past the last summary are
    dropped, so one template serves any count up to its slot count.
    Substitution is a single pass per line: braces or placeholder-like
    strings inside a summary are inserted verbatim, never re-expanded.
    """
    n = len(texts)
    indices = [int(m.group(1)) for m in _PLACEHOLDER_RE.finditer(template_text)]
    if not indices:
        raise UnknownTemplate("template has no {{summary_N}} placeholders")
    if n > max(indices):
        raise TemplateTooSmall(
            f"template has {max(indices)} summary slots but {n} summaries given"
        )
    out_lines = []
    for line in template_text.splitlines():
        slot_indices = [int(m.group(1)) for m in _PLACEHOLDER_RE.finditer(line)]
        if any(k > n for k in slot_indices):
            continue
        out_lines.append(
            _PLACEHOLDER_RE.sub(lambda m: texts[int(m.group(1)) - 1], line)
        )
    return "\n".join(out_lines)


def render_prompt(
    strategy: CooperateStrategy | str,
    retained: SummarySet,
    template_id: str | None = None,
    templates_dir: str | Path | None = None,
) -> CooperationRequest:
    """Fill the strategy's template with the retained summaries, in order."""
    strategy = CooperateStrategy(strategy)
    if strategy not in DEFAULT_TEMPLATE_IDS:
        raise UnknownTemplate(f"strategy {strategy.value!r} has no prompt template")
    if len(retained) < 2:
        raise ValueError("need at least 2 summaries to fuse")
    resolved_id = template_id or DEFAULT_TEMPLATE_IDS[strategy]
    template_text = load_template(resolved_id, templates_dir)
    rendered = _fill_template(template_text, [s.text for s in retained.items])
    for s in retained.items:
        if s.text not in rendered:
            raise ValueError(
                f"template {resolved_id!r} dropped summary {s.expert_id!r}; "
                "check its {{summary_N}} slot lines"
            )
    return CooperationRequest(
        strategy=strategy,
        prompt_template_id=resolved_id,
        rendered_prompt=rendered,
        inputs=retained,
    )


def cooperate(
    strategy: CooperateStrategy | str,
    retained: SummarySet,
    llm=None,
    template_id: str | None = None,
    templates_dir: str | Path | None = None,
) -> Summary:
    """Fuse the retained summaries into one.

    merge / common_ground send the rendered prompt to `llm` (anything with a
    `complete(prompt) -> str` method) and wrap the trimmed reply as a new
    Summary under expert id "fused". select returns the highest-scored
    retained summary unchanged, with no LLM call.
    """
    strategy = CooperateStrategy(strategy)
    if strategy is CooperateStrategy.SELECT:
        if retained.scores is None:
            raise ValueError("select needs scores on the retained set; run a filter first")
        best = int(np.argmax(retained.scores))  # ties break toward the lowest index
        logger.info(
            "event=cooperate strategy=select chosen_expert=%s score=%.6f",
            retained.items[best].expert_id,
            retained.scores[best],
        )
        return retained.items[best]

    if llm is None:
        raise ValueError(f"strategy {strategy.value!r} needs an LLM client")
    request = render_prompt(strategy, retained, template_id, templates_dir)
    response = llm.complete(request.rendered_prompt)
    text = (response or "").strip()
    if not text:
        raise EmptyResponse("fusion LLM returned empty text")
    used_audio = any(s.used_audio for s in retained.items)
    return Summary(expert_id=FUSED_EXPERT_ID, text=text, used_audio=used_audio)
