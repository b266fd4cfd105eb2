"""CLI: export a video's frame embeddings to a cache file, or serve text
embeddings over HTTP."""

from __future__ import annotations

import argparse
import logging
import sys

from .backends import get_backend
from .cachefile import write_cache
from .errors import ExporterError
from .video import extract_frames

logger = logging.getLogger(__name__)


def export_video(
    video_path: str,
    video_id: str,
    interval_sec: float,
    model_name: str,
    out_path: str,
) -> int:
    """Extract frames, embed, and write the cache file. Returns frame count."""
    backend = get_backend(model_name)
    times, frames, duration = extract_frames(video_path, interval_sec)
    vectors = backend.embed_images(frames)
    write_cache(
        out_path,
        video_id=video_id,
        interval_sec=interval_sec,
        duration_sec=duration,
        model_name=backend.model_name,
        times=times,
        vectors=vectors,
    )
    logger.info(
        "exported video=%s frames=%d dim=%d duration=%.3fs out=%s",
        video_id, len(times), vectors.shape[1], duration, out_path,
    )
    return len(times)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vidfuse-export",
        description="Frame-embedding exporter and text-embedding server",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    exp = sub.add_parser("export", help="write one video's frame embeddings to a cache file")
    exp.add_argument("--video", required=True, help="input video file")
    exp.add_argument("--id", required=True, help="video id recorded in the cache")
    exp.add_argument("--interval", type=float, default=2.0, help="sampling interval seconds")
    exp.add_argument("--model", default="hash:16",
                     help="embedding model: hash:<dim> or a CLIP checkpoint name")
    exp.add_argument("--out", required=True, help="output cache file path")

    srv = sub.add_parser("serve", help="serve POST /v1/embeddings for texts")
    srv.add_argument("--port", type=int, default=8094)
    srv.add_argument("--host", default="127.0.0.1")
    srv.add_argument("--model", default="hash:16")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s %(message)s")
    try:
        if args.command == "export":
            n = export_video(args.video, args.id, args.interval, args.model, args.out)
            print(f"wrote {n} frames to {args.out}")
            return 0
        from .server import serve_forever
        serve_forever(get_backend(args.model), args.host, args.port)
        return 0
    except ExporterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"IO error: {exc}", file=sys.stderr)
        return 1


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()
