"""Command-line interface: summarize | retrieve | evaluate | pipeline.

Flags override config-file values, which override defaults. Exit codes:
0 everything succeeded, 2 some items failed, 1 fatal config or IO error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import K_MODES, PipelineConfig
from .datasets import ANNOTATION_ADAPTERS
from .errors import VidfuseError
from .pipeline import (
    StageOutcome,
    cmd_evaluate,
    cmd_pipeline,
    cmd_retrieve,
    cmd_summarize,
)

logger = logging.getLogger(__name__)


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--summaries", dest="summaries_path", help="expert summaries JSONL")
    p.add_argument("--cache-dir", dest="cache_dir", help="directory of <video_id>.emb caches")
    p.add_argument("--annotations", dest="annotations_path", help="annotation file")
    p.add_argument(
        "--annotations-format",
        dest="annotations_format",
        choices=ANNOTATION_ADAPTERS,
        help="annotation adapter",
    )
    p.add_argument("--durations", dest="durations_path", help="video_id -> seconds JSON sidecar")
    p.add_argument("--out-dir", dest="out_dir", help="output directory")
    p.add_argument("--filter", dest="filter_strategy",
                   choices=["avg_clip", "middle_frame", "none"], help="outlier filter strategy")
    p.add_argument("--cooperate", dest="cooperate_strategy",
                   choices=["merge", "common_ground", "select"], help="fusion strategy")
    p.add_argument("--template-id", dest="template_id", help="prompt template id")
    p.add_argument("--templates-dir", dest="templates_dir", help="directory of template files")
    p.add_argument("--k-mode", dest="k_mode", choices=list(K_MODES), help="keyframe count mode")
    p.add_argument("--k-value", dest="k_value", type=float, help="value for the chosen k mode")
    p.add_argument("--gap-tolerance", dest="gap_tolerance_frames", type=int,
                   help="merge keyframe runs separated by at most this many missing frames")
    p.add_argument("--thresholds", dest="thresholds", type=_threshold_list,
                   help="comma-separated IoU thresholds, e.g. 0.3,0.5,0.7")
    p.add_argument("--parallelism", dest="parallelism", type=int, help="worker pool size")
    p.add_argument("--strict-queries", dest="strict_queries", action="store_const", const=True,
                   default=None, help="fail when predictions reference unknown query ids")
    p.add_argument("--allow-model-mismatch", dest="allow_model_mismatch",
                   action="store_const", const=True, default=None,
                   help="permit caches built with a different embedding model")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")


def _threshold_list(raw: str) -> list[float]:
    return [float(x) for x in raw.split(",") if x.strip()]


_OVERRIDE_KEYS = (
    "summaries_path", "cache_dir", "annotations_path", "annotations_format",
    "durations_path", "out_dir", "filter_strategy", "cooperate_strategy",
    "template_id", "templates_dir", "k_mode", "k_value", "gap_tolerance_frames",
    "thresholds", "parallelism", "strict_queries", "allow_model_mismatch",
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vidfuse",
        description="Fuse expert video summaries, retrieve keyframe spans, evaluate IoU/recall",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, descr in (
        ("summarize", "fuse expert summaries per video"),
        ("retrieve", "rank frames against fused summaries and emit span predictions"),
        ("evaluate", "score predictions against ground-truth windows"),
        ("pipeline", "run all three stages, skipping up-to-date outputs"),
    ):
        p = sub.add_parser(name, help=descr)
        _add_common_flags(p)
        if name == "pipeline":
            p.add_argument("--force", action="store_true",
                           help="re-run stages even when outputs are up to date")
    return parser


def _load_config(args: argparse.Namespace) -> PipelineConfig:
    config = PipelineConfig.from_file(args.config) if args.config else PipelineConfig()
    overrides = {k: getattr(args, k, None) for k in _OVERRIDE_KEYS}
    return config.with_overrides(**overrides)


def _exit_code(outcomes: list[StageOutcome]) -> int:
    return 2 if any(o.failed for o in outcomes) else 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s %(message)s",
    )
    try:
        config = _load_config(args)
        if args.command == "summarize":
            return _exit_code([cmd_summarize(config)])
        if args.command == "retrieve":
            return _exit_code([cmd_retrieve(config)])
        if args.command == "evaluate":
            return _exit_code([cmd_evaluate(config)])
        return _exit_code(cmd_pipeline(config, force=args.force))
    except VidfuseError as exc:
        logger.error("fatal: %s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        logger.error("fatal IO error: %s", exc)
        print(f"IO error: {exc}", file=sys.stderr)
        return 1


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()
