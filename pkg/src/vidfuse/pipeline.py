"""Batch orchestration of the summarize -> retrieve -> evaluate stages.

Each stage reads fixed-name files in/under the configured directories and
writes fixed-name outputs under out_dir (`fused.jsonl`, `predictions.jsonl`,
`report.json`, `report.txt`). Every output embeds the resolved config hash;
a completed stage whose hash matches is skipped on re-run unless forced.
One failing video never aborts the rest of the batch.
"""

from __future__ import annotations

import dataclasses
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import datasets, metrics
from .cache import cache_load
from .config import PipelineConfig, resolve_k
from .ensemble import (
    FilterOutcome,
    FilterStrategy,
    SummarySet,
    average_expert_score,
    cooperate,
    filter_outlier_avg,
    filter_outlier_middle_frame,
)
from .errors import (
    ConfigError,
    TooFewSummaries,
    UnmatchedQueries,
    VidfuseError,
)
from .metrics import QueryResult, emit_report
from .providers import ChatClient, EmbeddingClient, ProviderConfig
from .retrieval import (
    Span,
    SpanSet,
    keyframes_to_spans,
    primary_span,
    rank_frames,
    select_top_k,
)
from .vectors import cosine_similarity

logger = logging.getLogger(__name__)

OUTPUT_SCHEMA_VERSION = 1

FUSED_FILE = "fused.jsonl"
PREDICTIONS_FILE = "predictions.jsonl"
REPORT_JSON = "report.json"
REPORT_TXT = "report.txt"


@dataclasses.dataclass
class StageOutcome:
    stage: str
    ok: int = 0
    failed: int = 0
    skipped_stage: bool = False
    errors: list[dict] = dataclasses.field(default_factory=list)

    @property
    def exit_code(self) -> int:
        return 2 if self.failed else 0


def _meta_line(stage: str, config_hash: str) -> dict:
    return {
        "record_type": "meta",
        "stage": stage,
        "config_hash": config_hash,
        "schema_version": OUTPUT_SCHEMA_VERSION,
    }


def _write_jsonl(path: Path, meta: dict, records: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write(json.dumps(meta, sort_keys=True) + "\n")
        for rec in records:
            f.write(json.dumps(rec, sort_keys=True) + "\n")


def _read_jsonl(path: Path) -> tuple[dict, list[dict]]:
    meta: dict = {}
    records: list[dict] = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            if obj.get("record_type") == "meta":
                meta = obj
            else:
                records.append(obj)
    return meta, records


def _write_errors(out_dir: Path, stage: str, errors: list[dict]) -> None:
    path = out_dir / f"{stage}_errors.jsonl"
    if errors:
        with open(path, "w", encoding="utf-8") as f:
            for err in sorted(errors, key=lambda e: e.get("id", "")):
                f.write(json.dumps(err, sort_keys=True) + "\n")
    elif path.exists():
        path.unlink()


def _output_hash(path: Path) -> str | None:
    """Config hash embedded in an existing output file, if readable."""
    if not path.exists():
        return None
    try:
        if path.suffix == ".jsonl":
            meta, _ = _read_jsonl(path)
            return meta.get("config_hash")
        return json.loads(path.read_text(encoding="utf-8")).get("config_hash")
    except (json.JSONDecodeError, OSError):
        return None


def _check_model_match(config: PipelineConfig, track) -> None:
    if config.allow_model_mismatch or config.embedder is None:
        return
    if track.model_name and track.model_name != config.embedder.model_name:
        raise ConfigError(
            f"cache for {track.video_id!r} was built with model "
            f"{track.model_name!r} but embedder is {config.embedder.model_name!r} "
            "(set allow_model_mismatch to override)"
        )


def _apply_filter(config: PipelineConfig, sset: SummarySet, track) -> FilterOutcome:
    """Run the configured outlier filter, degrading gracefully below 3 experts."""
    strategy = FilterStrategy(config.filter_strategy)
    if strategy is FilterStrategy.NONE:
        return FilterOutcome(
            retained=sset, removed_index=None, scores=[], strategy=FilterStrategy.NONE
        )
    filter_fn = (
        filter_outlier_avg if strategy is FilterStrategy.AVG_CLIP
        else filter_outlier_middle_frame
    )
    try:
        return filter_fn(sset, track)
    except TooFewSummaries:
        logger.warning(
            "video=%s event=filter_skipped reason=too_few_summaries n=%d",
            track.video_id, len(sset),
        )
        if strategy is FilterStrategy.AVG_CLIP:
            scores = [average_expert_score(s, track) for s in sset.items]
        else:
            middle = track.vectors[track.n_frames // 2]
            scores = [cosine_similarity(s.embedding, middle) for s in sset.items]
        return FilterOutcome(
            retained=SummarySet(sset.items, scores),
            removed_index=None,
            scores=scores,
            strategy=FilterStrategy.NONE,
        )


def _summarize_one(
    config: PipelineConfig,
    video_id: str,
    summary_file: datasets.ExpertSummaryFile,
    embed_client: EmbeddingClient | None,
    chat_client: ChatClient | None,
) -> dict:
    track = cache_load(Path(config.cache_dir) / f"{video_id}.emb")
    needs_embeddings = config.filter_strategy != FilterStrategy.NONE.value
    entries = summary_file.entries
    if needs_embeddings:
        _check_model_match(config, track)
        vectors = embed_client.embed_texts([s.text for s in entries])
        entries = [dataclasses.replace(s, embedding=v) for s, v in zip(entries, vectors)]
    sset = SummarySet(entries)
    outcome = _apply_filter(config, sset, track)
    fused = cooperate(
        config.cooperate_strategy,
        outcome.retained,
        llm=chat_client,
        template_id=config.template_id,
        templates_dir=config.templates_dir,
    )
    removed_expert = (
        sset.items[outcome.removed_index].expert_id
        if outcome.removed_index is not None
        else None
    )
    return {
        "record_type": "fused",
        "video_id": video_id,
        "text": fused.text,
        "fused_expert_id": fused.expert_id,
        "cooperate_strategy": config.cooperate_strategy,
        "filter_strategy": config.filter_strategy,
        "applied_filter": outcome.strategy.value,
        "removed_index": outcome.removed_index,
        "removed_expert_id": removed_expert,
        "scores": {
            s.expert_id: score for s, score in zip(sset.items, outcome.scores)
        },
        "retained_expert_ids": [s.expert_id for s in outcome.retained.items],
        "used_audio": {s.expert_id: s.used_audio for s in sset.items},
        "fusion_model": config.fusion_llm.model_name if config.fusion_llm else None,
        "template_id": config.template_id,
    }


def _run_batch(items, worker, parallelism: int, stage: str) -> tuple[list, list[dict]]:
    """Run worker(id, payload) over items; isolate per-item failures."""

    def safe(item):
        item_id, payload = item
        try:
            return item_id, worker(item_id, payload), None
        except (VidfuseError, OSError, ValueError) as exc:
            logger.error("stage=%s id=%s event=item_failed error=%s", stage, item_id, exc)
            return item_id, None, {
                "id": item_id,
                "stage": stage,
                "error_type": type(exc).__name__,
                "message": str(exc),
            }

    if parallelism > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(safe, items))
    else:
        results = [safe(item) for item in items]
    records = [rec for _, rec, err in results if err is None]
    errors = [err for _, _, err in results if err is not None]
    return records, errors


def cmd_summarize(config: PipelineConfig) -> StageOutcome:
    """Fuse expert summaries per video into out_dir/fused.jsonl."""
    config.validate(stages=("summarize",))
    out_dir = Path(config.out_dir)
    by_video = datasets.load_all_expert_summaries(config.summaries_path)
    embed_client = EmbeddingClient(config.embedder) if config.embedder else None
    chat_client = ChatClient(config.fusion_llm) if config.fusion_llm else None

    def worker(video_id, summary_file):
        return _summarize_one(config, video_id, summary_file, embed_client, chat_client)

    items = sorted(by_video.items())
    records, errors = _run_batch(items, worker, config.parallelism, "summarize")
    records.sort(key=lambda r: r["video_id"])
    _write_jsonl(out_dir / FUSED_FILE, _meta_line("summarize", config.config_hash()), records)
    _write_errors(out_dir, "summarize", errors)
    logger.info("stage=summarize ok=%d failed=%d", len(records), len(errors))
    return StageOutcome("summarize", ok=len(records), failed=len(errors), errors=errors)


def _retrieve_for_video(
    config: PipelineConfig,
    video_id: str,
    fused_text: str,
    queries: list[datasets.AnnotationRecord],
    embed_client: EmbeddingClient,
) -> list[dict]:
    track = cache_load(Path(config.cache_dir) / f"{video_id}.emb")
    _check_model_match(config, track)
    summary_emb = embed_client.embed_texts([fused_text])[0]
    ranked = rank_frames(summary_emb, track)
    k = resolve_k(config.k_mode, config.k_value, ranked)
    indices = select_top_k(ranked, k)
    spans = keyframes_to_spans(indices, track, config.gap_tolerance_frames)
    prim = primary_span(ranked, spans)
    stats = {
        "sim_min": float(ranked.scores[-1]),
        "sim_max": float(ranked.scores[0]),
        "sim_mean": float(ranked.scores.mean()),
    }
    return [
        {
            "record_type": "prediction",
            "query_id": q.query_id,
            "video_id": video_id,
            "spans": spans.to_pairs(),
            "primary": [prim.start, prim.end],
            "k": k,
            "n_frames": track.n_frames,
            **stats,
        }
        for q in queries
    ]


def cmd_retrieve(config: PipelineConfig) -> StageOutcome:
    """Predict spans per query into out_dir/predictions.jsonl."""
    config.validate(stages=("retrieve",))
    out_dir = Path(config.out_dir)
    fused_path = out_dir / FUSED_FILE
    if not fused_path.is_file():
        raise ConfigError(f"missing {fused_path}; run summarize first")
    _, fused_records = _read_jsonl(fused_path)
    fused_by_video = {r["video_id"]: r["text"] for r in fused_records}

    annotations = datasets.load_annotations(
        config.annotations_path,
        config.annotations_format,
        durations_path=config.durations_path,
        malformed_cap=config.malformed_cap,
    )
    queries_by_video: dict[str, list[datasets.AnnotationRecord]] = {}
    for rec in annotations:
        queries_by_video.setdefault(rec.video_id, []).append(rec)

    embed_client = EmbeddingClient(config.embedder)
    errors: list[dict] = []
    items = []
    for video_id, queries in sorted(queries_by_video.items()):
        if video_id not in fused_by_video:
            errors.append({
                "id": video_id,
                "stage": "retrieve",
                "error_type": "MissingFusedSummary",
                "message": f"no fused summary for video {video_id!r}",
            })
            continue
        items.append((video_id, (fused_by_video[video_id], queries)))

    def worker(video_id, payload):
        fused_text, queries = payload
        return _retrieve_for_video(config, video_id, fused_text, queries, embed_client)

    grouped, batch_errors = _run_batch(items, worker, config.parallelism, "retrieve")
    errors.extend(batch_errors)
    records = [rec for group in grouped for rec in group]
    records.sort(key=lambda r: r["query_id"])
    _write_jsonl(
        out_dir / PREDICTIONS_FILE, _meta_line("retrieve", config.config_hash()), records
    )
    _write_errors(out_dir, "retrieve", errors)
    logger.info("stage=retrieve ok=%d failed=%d", len(records), len(errors))
    return StageOutcome("retrieve", ok=len(records), failed=len(errors), errors=errors)


def cmd_evaluate(config: PipelineConfig) -> StageOutcome:
    """Score predictions against annotations into report.json / report.txt."""
    config.validate(stages=("evaluate",))
    out_dir = Path(config.out_dir)
    pred_path = out_dir / PREDICTIONS_FILE
    if not pred_path.is_file():
        raise ConfigError(f"missing {pred_path}; run retrieve first")
    _, predictions = _read_jsonl(pred_path)
    annotations = datasets.load_annotations(
        config.annotations_path,
        config.annotations_format,
        durations_path=config.durations_path,
        malformed_cap=config.malformed_cap,
    )
    by_query = {a.query_id: a for a in annotations}

    unmatched = sorted(p["query_id"] for p in predictions if p["query_id"] not in by_query)
    if unmatched:
        if config.strict_queries:
            raise UnmatchedQueries(
                f"{len(unmatched)} predictions lack annotations: {unmatched[:10]}"
            )
        logger.warning(
            "stage=evaluate event=unmatched_queries count=%d first=%s",
            len(unmatched), unmatched[:10],
        )
    unpredicted = len(by_query) - (len(predictions) - len(unmatched))
    if unpredicted:
        logger.warning("stage=evaluate event=queries_without_predictions count=%d", unpredicted)

    results = []
    for p in predictions:
        ann = by_query.get(p["query_id"])
        if ann is None:
            continue
        results.append(
            QueryResult(
                query_id=p["query_id"],
                predicted=SpanSet.from_pairs(p["spans"]),
                primary=Span(*p["primary"]) if p.get("primary") else None,
                ground_truth=ann.windows,
            )
        )
    report = metrics.evaluate(results, tuple(config.thresholds))

    report_obj = json.loads(emit_report(report, "json"))
    wrapped = {"config_hash": config.config_hash(), **report_obj}
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / REPORT_JSON).write_text(
        json.dumps(wrapped, indent=2) + "\n", encoding="utf-8"
    )
    (out_dir / REPORT_TXT).write_text(
        f"# config_hash: {config.config_hash()}\n" + emit_report(report, "table"),
        encoding="utf-8",
    )
    logger.info(
        "stage=evaluate n_queries=%d skipped=%d miou=%.4f",
        report.n_queries, report.skipped, report.miou,
    )
    return StageOutcome("evaluate", ok=report.n_queries)


_STAGES = (
    ("summarize", FUSED_FILE, cmd_summarize),
    ("retrieve", PREDICTIONS_FILE, cmd_retrieve),
    ("evaluate", REPORT_JSON, cmd_evaluate),
)


def _run_single_pipeline(config: PipelineConfig, force: bool) -> list[StageOutcome]:
    outcomes = []
    current_hash = config.config_hash()
    for stage, output_name, fn in _STAGES:
        output = Path(config.out_dir) / output_name
        if not force and _output_hash(output) == current_hash:
            logger.info("stage=%s event=skipped reason=up_to_date output=%s", stage, output)
            outcomes.append(StageOutcome(stage, skipped_stage=True))
            continue
        try:
            outcomes.append(fn(config))
        except VidfuseError as exc:
            if not any(o.failed for o in outcomes):
                raise  # nothing failed upstream: a genuine config/input problem
            # stage starved by earlier per-item failures; keep the partial-
            # failure exit semantics instead of escalating to fatal
            logger.error("stage=%s event=stage_skipped_after_failures error=%s", stage, exc)
            outcomes.append(StageOutcome(stage, failed=1, errors=[{
                "id": "", "stage": stage,
                "error_type": type(exc).__name__, "message": str(exc),
            }]))
            break
    return outcomes


def cmd_pipeline(config: PipelineConfig, force: bool = False) -> list[StageOutcome]:
    """summarize + retrieve + evaluate, with up-to-date stages skipped.

    When the config carries a matrix section, each (fusion LLM x strategy)
    combination runs into its own out_dir subdirectory.
    """
    if config.matrix is None:
        return _run_single_pipeline(config, force)

    outcomes: list[StageOutcome] = []
    base_out = Path(config.out_dir)
    for llm_spec in config.matrix.fusion_llms:
        spec = dict(llm_spec)
        name = spec.pop("name")
        for strategy in config.matrix.cooperate_strategies:
            combo = dataclasses.replace(
                config,
                cooperate_strategy=strategy,
                fusion_llm=ProviderConfig(**spec),
                out_dir=str(base_out / f"{name}__{strategy}"),
                matrix=None,
            )
            logger.info("event=matrix_combo llm=%s strategy=%s", name, strategy)
            outcomes.extend(_run_single_pipeline(combo, force))
    return outcomes
