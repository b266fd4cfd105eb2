"""vidfuse: fuse multi-expert video summaries, retrieve keyframes, score spans."""

from .ensemble import (
    CooperateStrategy,
    CooperationRequest,
    FilterOutcome,
    FilterStrategy,
    Summary,
    SummarySet,
    average_expert_score,
    cooperate,
    filter_outlier_avg,
    filter_outlier_middle_frame,
    render_prompt,
)
from .metrics import (
    EvalReport,
    QueryResult,
    emit_report,
    evaluate,
    mean_iou,
    parse_report,
    recall_at_1,
    span_iou,
    spanset_iou,
)
from .retrieval import (
    FrameEmbeddingTrack,
    RankedKeyframes,
    Span,
    SpanSet,
    keyframes_to_spans,
    primary_span,
    rank_frames,
    sample_frame_times,
    select_top_k,
)
from .vectors import as_embedding, cosine_similarity, normalize

__version__ = "0.1.0"
