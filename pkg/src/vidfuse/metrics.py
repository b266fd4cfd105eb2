"""Temporal IoU algebra and aggregate evaluation metrics.

mIoU compares the full predicted span set against the ground-truth set
(union IoU); Recall@1 scores only the single primary span against its
best-matching ground-truth span.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import NoResults, UnknownFormat
from .retrieval import Span, SpanSet

DEFAULT_THRESHOLDS = (0.3, 0.5, 0.7)

REPORT_SCHEMA_KEYS = ("n_queries", "skipped", "miou", "recall", "per_query")


@dataclass
class QueryResult:
    """One query's predicted spans, primary span, and ground truth."""

    query_id: str
    predicted: SpanSet
    primary: Span | None
    ground_truth: SpanSet


@dataclass
class QueryIoU:
    query_id: str
    union_iou: float
    primary_iou: float


@dataclass
class EvalReport:
    per_query: list[QueryIoU] = field(default_factory=list)
    miou: float = 0.0
    recall_at: dict[float, float] = field(default_factory=dict)
    n_queries: int = 0
    skipped: int = 0


def span_iou(a: Span, b: Span) -> float:
    """Intersection-over-union of two half-open spans; disjoint -> 0."""
    inter = min(a.end, b.end) - max(a.start, b.start)
    if inter <= 0:
        return 0.0
    union = (a.end - a.start) + (b.end - b.start) - inter
    return inter / union


def spanset_iou(a: SpanSet, b: SpanSet) -> float:
    """Total intersection length / total union length of two normalized sets.

    Both empty is defined as 0. Linear two-pointer sweep over the sorted
    spans.
    """
    if not a and not b:
        return 0.0
    inter = 0.0
    i = j = 0
    sa, sb = a.spans, b.spans
    while i < len(sa) and j < len(sb):
        lo = max(sa[i].start, sb[j].start)
        hi = min(sa[i].end, sb[j].end)
        if hi > lo:
            inter += hi - lo
        if sa[i].end <= sb[j].end:
            i += 1
        else:
            j += 1
    union = a.total_length() + b.total_length() - inter
    if union <= 0:
        return 0.0
    return inter / union


def best_gt_iou(primary: Span | None, ground_truth: SpanSet) -> float:
    """Max IoU of the primary span over the individual ground-truth spans."""
    if primary is None or not ground_truth:
        return 0.0
    return max(span_iou(primary, g) for g in ground_truth.spans)


def recall_at_1(results: list[QueryResult], threshold: float) -> float:
    """Fraction of queries whose primary span reaches IoU >= threshold
    against its best-matching ground-truth span."""
    if not results:
        raise NoResults("recall_at_1 needs at least one result")
    if not (0 < threshold <= 1):
        raise ValueError(f"threshold must be in (0, 1], got {threshold}")
    hits = sum(1 for r in results if best_gt_iou(r.primary, r.ground_truth) >= threshold)
    return hits / len(results)


def mean_iou(results: list[QueryResult]) -> float:
    """Arithmetic mean of per-query union IoU (predicted vs ground truth)."""
    if not results:
        raise NoResults("mean_iou needs at least one result")
    return sum(spanset_iou(r.predicted, r.ground_truth) for r in results) / len(results)


def evaluate(
    results: list[QueryResult], thresholds=DEFAULT_THRESHOLDS
) -> EvalReport:
    """Aggregate per-query IoUs into an EvalReport.

    Queries with empty ground truth are excluded from all aggregates and
    counted in `skipped`. Rows are sorted by query_id so shard merges and
    reruns are deterministic.
    """
    evaluable = [r for r in results if r.ground_truth]
    skipped = len(results) - len(evaluable)
    if not evaluable:
        raise NoResults(f"no evaluable queries ({skipped} skipped for empty ground truth)")
    evaluable = sorted(evaluable, key=lambda r: r.query_id)
    per_query = [
        QueryIoU(
            query_id=r.query_id,
            union_iou=spanset_iou(r.predicted, r.ground_truth),
            primary_iou=best_gt_iou(r.primary, r.ground_truth),
        )
        for r in evaluable
    ]
    recall = {float(t): recall_at_1(evaluable, float(t)) for t in thresholds}
    return EvalReport(
        per_query=per_query,
        miou=mean_iou(evaluable),
        recall_at=recall,
        n_queries=len(evaluable),
        skipped=skipped,
    )


def _threshold_key(t: float) -> str:
    # repr keeps the exact float so parse_report round-trips bit-for-bit
    return repr(float(t))


def emit_report(report: EvalReport, format: str = "json") -> str:
    """Render a report as machine-readable JSON or a human table.

    JSON keeps full float precision (exact re-parse); the table uses fixed
    4-decimal formatting so diffs stay stable.
    """
    if format == "json":
        obj = {
            "n_queries": report.n_queries,
            "skipped": report.skipped,
            "miou": report.miou,
            "recall": {_threshold_key(t): v for t, v in sorted(report.recall_at.items())},
            "per_query": [
                {"query_id": q.query_id, "union_iou": q.union_iou, "primary_iou": q.primary_iou}
                for q in report.per_query
            ],
        }
        return json.dumps(obj, indent=2) + "\n"
    if format == "table":
        thresholds = sorted(report.recall_at)
        header = ["mIoU"] + [f"R@{t:g}" for t in thresholds]
        values = [f"{report.miou:.4f}"] + [f"{report.recall_at[t]:.4f}" for t in thresholds]
        width = max(8, max(len(h) for h in header) + 2)
        lines = [
            f"queries evaluated: {report.n_queries} (skipped {report.skipped})",
            "".join(h.ljust(width) for h in header).rstrip(),
            "".join(v.ljust(width) for v in values).rstrip(),
        ]
        return "\n".join(lines) + "\n"
    raise UnknownFormat(f"unknown report format {format!r}")


def parse_report(text: str) -> EvalReport:
    """Inverse of emit_report(..., "json"). Ignores unknown keys."""
    obj = json.loads(text)
    missing = [k for k in REPORT_SCHEMA_KEYS if k not in obj]
    if missing:
        raise ValueError(f"report missing keys: {missing}")
    return EvalReport(
        per_query=[
            QueryIoU(q["query_id"], float(q["union_iou"]), float(q["primary_iou"]))
            for q in obj["per_query"]
        ],
        miou=float(obj["miou"]),
        recall_at={float(k): float(v) for k, v in obj["recall"].items()},
        n_queries=int(obj["n_queries"]),
        skipped=int(obj["skipped"]),
    )
