"""Loaders for moment annotations and expert summary dumps.

Everything converges on one canonical JSONL annotation schema; per-dataset
quirks live in thin adapters. Parsing is lenient by default: malformed
lines are collected and only become fatal past a configurable fraction.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from .ensemble import Summary
from .errors import (
    DuplicateExpert,
    NoUsableEntries,
    TooManyMalformed,
    UnknownAdapter,
)
from .retrieval import SpanSet

logger = logging.getLogger(__name__)

ANNOTATION_ADAPTERS = ("canonical_jsonl", "charades_sta_lines", "qvh_style_jsonl")

DEFAULT_MALFORMED_CAP = 0.01


@dataclass
class AnnotationRecord:
    """One query: which video, what was asked, and the true windows."""

    query_id: str
    video_id: str
    query_text: str
    duration_sec: float
    windows: SpanSet


@dataclass
class ExpertSummaryFile:
    """All expert summaries for one video."""

    video_id: str
    entries: list[Summary]


@dataclass
class LoadStats:
    """Side channel for lenient parsing: what was dropped or adjusted."""

    total_lines: int = 0
    malformed: list[str] = field(default_factory=list)
    clipped_windows: int = 0
    dropped_windows: int = 0


def _clip_windows(pairs, duration: float, stats: LoadStats) -> SpanSet:
    kept = []
    for s, e in pairs:
        s, e = float(s), float(e)
        cs, ce = max(0.0, s), min(float(duration), e)
        if (cs, ce) != (s, e):
            stats.clipped_windows += 1
        if ce - cs <= 0:
            stats.dropped_windows += 1
            continue
        kept.append((cs, ce))
    return SpanSet.from_pairs(kept)


def _parse_canonical_line(line: str, _line_no: int, stats: LoadStats) -> AnnotationRecord:
    obj = json.loads(line)
    duration = float(obj["duration_sec"])
    if duration <= 0:
        raise ValueError(f"duration_sec must be > 0, got {duration}")
    return AnnotationRecord(
        query_id=str(obj["query_id"]),
        video_id=str(obj["video_id"]),
        query_text=str(obj["query_text"]),
        duration_sec=duration,
        windows=_clip_windows(obj["windows"], duration, stats),
    )


def _parse_charades_line(
    line: str, line_no: int, stats: LoadStats, durations: dict[str, float] | None
) -> AnnotationRecord:
    # format: "VID start end##query text"
    info, query = line.split("##", 1)
    vid, s, e = info.split()
    query = query.strip()
    if not query:
        raise ValueError("empty query text")
    start, end = float(s), float(e)
    if durations and vid in durations:
        duration = float(durations[vid])
    else:
        # no sidecar: assume the window end bounds the video
        duration = end
    return AnnotationRecord(
        query_id=f"{vid}#{line_no}",
        video_id=vid,
        query_text=query,
        duration_sec=duration,
        windows=_clip_windows([(start, end)], duration, stats),
    )


def _parse_qvh_line(line: str, _line_no: int, stats: LoadStats) -> AnnotationRecord:
    obj = json.loads(line)
    duration = float(obj["duration"])
    return AnnotationRecord(
        query_id=str(obj["qid"]),
        video_id=str(obj["vid"]),
        query_text=str(obj["query"]),
        duration_sec=duration,
        windows=_clip_windows(obj["relevant_windows"], duration, stats),
    )


def load_annotations(
    path: str | Path,
    format_adapter: str = "canonical_jsonl",
    durations_path: str | Path | None = None,
    malformed_cap: float = DEFAULT_MALFORMED_CAP,
) -> list[AnnotationRecord]:
    """Parse an annotation file into canonical records.

    `durations_path` (JSON map video_id -> seconds) only applies to the
    charades adapter, whose lines carry no duration of their own.
    Raises UnknownAdapter or TooManyMalformed.
    """
    if format_adapter not in ANNOTATION_ADAPTERS:
        raise UnknownAdapter(
            f"adapter {format_adapter!r} not one of {ANNOTATION_ADAPTERS}"
        )
    durations = None
    if durations_path is not None:
        durations = {
            str(k): float(v)
            for k, v in json.loads(Path(durations_path).read_text(encoding="utf-8")).items()
        }

    stats = LoadStats()
    records: list[AnnotationRecord] = []
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f):
            line = line.strip()
            if not line:
                continue
            stats.total_lines += 1
            try:
                if format_adapter == "canonical_jsonl":
                    records.append(_parse_canonical_line(line, line_no, stats))
                elif format_adapter == "charades_sta_lines":
                    records.append(_parse_charades_line(line, line_no, stats, durations))
                else:
                    records.append(_parse_qvh_line(line, line_no, stats))
            except (ValueError, KeyError, TypeError, json.JSONDecodeError) as exc:
                stats.malformed.append(f"line {line_no}: {exc}")

    if stats.total_lines and len(stats.malformed) / stats.total_lines > malformed_cap:
        raise TooManyMalformed(
            f"{len(stats.malformed)}/{stats.total_lines} malformed lines "
            f"(cap {malformed_cap:.0%}); first: {stats.malformed[0]}"
        )
    if stats.malformed:
        logger.warning(
            "event=annotations_malformed file=%s count=%d first=%s",
            path, len(stats.malformed), stats.malformed[0],
        )
    if stats.clipped_windows or stats.dropped_windows:
        logger.warning(
            "event=annotations_clipped file=%s clipped=%d dropped=%d",
            path, stats.clipped_windows, stats.dropped_windows,
        )
    return records


def dump_annotations(records: list[AnnotationRecord], path: str | Path) -> None:
    """Write records in the canonical JSONL schema (inverse of the loader)."""
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            f.write(
                json.dumps(
                    {
                        "query_id": r.query_id,
                        "video_id": r.video_id,
                        "query_text": r.query_text,
                        "duration_sec": r.duration_sec,
                        "windows": r.windows.to_pairs(),
                    }
                )
                + "\n"
            )


def _group_summary_lines(path: str | Path) -> dict[str, list[Summary]]:
    """Parse the expert-summaries JSONL: one object per (video, expert)."""
    grouped: dict[str, list[Summary]] = {}
    skipped_empty = 0
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            vid = str(obj["video_id"])
            expert = str(obj["expert_id"])
            text = str(obj.get("text", ""))
            if not text.strip():
                skipped_empty += 1
                logger.warning(
                    "event=summary_skipped video=%s expert=%s reason=empty_text line=%d",
                    vid, expert, line_no,
                )
                continue
            entry = Summary(
                expert_id=expert, text=text, used_audio=bool(obj.get("used_audio", False))
            )
            bucket = grouped.setdefault(vid, [])
            if any(s.expert_id == expert for s in bucket):
                raise DuplicateExpert(f"expert {expert!r} appears twice for video {vid!r}")
            bucket.append(entry)
    return grouped


def load_expert_summaries(path: str | Path, video_id: str | None = None) -> ExpertSummaryFile:
    """Load summaries for one video from an expert-summaries JSONL file.

    Without `video_id` the file must contain exactly one video. Non-empty
    entries load even when some are skipped; none usable raises
    NoUsableEntries.
    """
    grouped = _group_summary_lines(path)
    if not grouped:
        raise NoUsableEntries(f"no usable summaries in {path}")
    if video_id is None:
        if len(grouped) != 1:
            raise ValueError(
                f"{path} holds {len(grouped)} videos; pass video_id to pick one"
            )
        video_id = next(iter(grouped))
    if video_id not in grouped or not grouped[video_id]:
        raise NoUsableEntries(f"no usable summaries for video {video_id!r} in {path}")
    return ExpertSummaryFile(video_id=video_id, entries=grouped[video_id])


def load_all_expert_summaries(path: str | Path) -> dict[str, ExpertSummaryFile]:
    """Load every video's summaries from an expert-summaries JSONL file."""
    grouped = _group_summary_lines(path)
    if not grouped:
        raise NoUsableEntries(f"no usable summaries in {path}")
    return {
        vid: ExpertSummaryFile(video_id=vid, entries=entries)
        for vid, entries in grouped.items()
    }
