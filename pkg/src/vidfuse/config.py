"""Pipeline configuration: JSON file + CLI-flag overrides + defaults.

Precedence is flags > file > defaults. The resolved config hashes to a
stable identifier that every output file embeds, which is what makes
re-runs skippable and outputs comparable.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .datasets import ANNOTATION_ADAPTERS, DEFAULT_MALFORMED_CAP
from .ensemble import CooperateStrategy, FilterStrategy
from .errors import ConfigError
from .providers import ProviderConfig
from .retrieval import RankedKeyframes

K_MODES = ("fraction", "absolute", "threshold")


@dataclass
class MatrixSpec:
    """Optional sweep: run the pipeline once per (LLM, strategy) combo."""

    cooperate_strategies: list[str]
    fusion_llms: list[dict]  # each: {"name": ..., plus ProviderConfig fields}


@dataclass
class PipelineConfig:
    summaries_path: str = ""
    cache_dir: str = ""
    annotations_path: str = ""
    annotations_format: str = "canonical_jsonl"
    durations_path: str | None = None
    out_dir: str = "out"

    filter_strategy: str = FilterStrategy.AVG_CLIP.value
    cooperate_strategy: str = CooperateStrategy.COMMON_GROUND.value
    template_id: str | None = None
    templates_dir: str | None = None

    k_mode: str = "fraction"
    k_value: float = 0.15
    gap_tolerance_frames: int = 0

    thresholds: list[float] = field(default_factory=lambda: [0.3, 0.5, 0.7])
    parallelism: int = 1
    strict_queries: bool = False
    allow_model_mismatch: bool = False
    malformed_cap: float = DEFAULT_MALFORMED_CAP

    embedder: ProviderConfig | None = None
    fusion_llm: ProviderConfig | None = None
    judge: ProviderConfig | None = None
    matrix: MatrixSpec | None = None

    # --- construction ---

    @classmethod
    def from_dict(cls, raw: dict) -> "PipelineConfig":
        raw = dict(raw)
        providers = raw.pop("providers", {})
        paths = raw.pop("paths", {})
        kwargs: dict = {}
        path_keys = {
            "summaries": "summaries_path",
            "cache_dir": "cache_dir",
            "annotations": "annotations_path",
            "annotations_format": "annotations_format",
            "durations": "durations_path",
            "out_dir": "out_dir",
        }
        for key, attr in path_keys.items():
            if key in paths and paths[key] is not None:
                kwargs[attr] = str(paths[key])
        for key, value in raw.items():
            if key == "matrix":
                continue
            if key not in cls.__dataclass_fields__:
                raise ConfigError(f"unknown config key {key!r}")
            kwargs[key] = value
        for name in ("embedder", "fusion_llm", "judge"):
            spec = providers.get(name)
            if spec is not None:
                try:
                    kwargs[name] = ProviderConfig(**spec)
                except (TypeError, ValueError) as exc:
                    raise ConfigError(f"bad provider config {name!r}: {exc}") from exc
        matrix = raw.get("matrix")
        if matrix is not None:
            try:
                kwargs["matrix"] = MatrixSpec(
                    cooperate_strategies=list(matrix["cooperate_strategies"]),
                    fusion_llms=list(matrix["fusion_llms"]),
                )
            except (KeyError, TypeError) as exc:
                raise ConfigError(f"bad matrix section: {exc}") from exc
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: str | Path) -> "PipelineConfig":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(raw)

    def with_overrides(self, **overrides) -> "PipelineConfig":
        """Apply non-None overrides (CLI flags) on top of this config."""
        fields = {k: v for k, v in overrides.items() if v is not None}
        return replace(self, **fields)

    # --- validation ---

    def validate(self, stages: tuple[str, ...] = ("summarize", "retrieve", "evaluate")) -> None:
        try:
            FilterStrategy(self.filter_strategy)
        except ValueError:
            raise ConfigError(f"unknown filter_strategy {self.filter_strategy!r}")
        try:
            coop = CooperateStrategy(self.cooperate_strategy)
        except ValueError:
            raise ConfigError(f"unknown cooperate_strategy {self.cooperate_strategy!r}")
        if coop is CooperateStrategy.SELECT and self.filter_strategy == FilterStrategy.NONE.value:
            raise ConfigError(
                "cooperate_strategy 'select' needs scores from a filter pass; "
                "set filter_strategy to avg_clip or middle_frame"
            )
        if self.k_mode not in K_MODES:
            raise ConfigError(f"k_mode must be one of {K_MODES}, got {self.k_mode!r}")
        if self.k_mode == "fraction" and not (0 < self.k_value <= 1):
            raise ConfigError(f"fraction k_value must be in (0, 1], got {self.k_value}")
        if self.k_mode == "absolute" and (self.k_value < 1 or self.k_value != int(self.k_value)):
            raise ConfigError(f"absolute k_value must be a positive integer, got {self.k_value}")
        if self.parallelism < 1:
            raise ConfigError(f"parallelism must be >= 1, got {self.parallelism}")
        if self.gap_tolerance_frames < 0:
            raise ConfigError(f"gap_tolerance_frames must be >= 0, got {self.gap_tolerance_frames}")
        for t in self.thresholds:
            if not (0 < t <= 1):
                raise ConfigError(f"thresholds must be in (0, 1], got {t}")
        if self.annotations_format not in ANNOTATION_ADAPTERS:
            raise ConfigError(f"unknown annotations_format {self.annotations_format!r}")

        if "summarize" in stages:
            self._require_path("summaries_path", self.summaries_path)
            self._require_path("cache_dir", self.cache_dir, is_dir=True)
            if self.embedder is None and self.filter_strategy != FilterStrategy.NONE.value:
                raise ConfigError("filtering needs providers.embedder")
            if coop in (CooperateStrategy.MERGE, CooperateStrategy.COMMON_GROUND) and (
                self.fusion_llm is None and self.matrix is None
            ):
                raise ConfigError(f"strategy {coop.value!r} needs providers.fusion_llm")
        if "retrieve" in stages:
            self._require_path("cache_dir", self.cache_dir, is_dir=True)
            self._require_path("annotations_path", self.annotations_path)
            if self.embedder is None:
                raise ConfigError("retrieval needs providers.embedder")
        if "evaluate" in stages:
            self._require_path("annotations_path", self.annotations_path)

    @staticmethod
    def _require_path(name: str, value: str, is_dir: bool = False) -> None:
        if not value:
            raise ConfigError(f"{name} is required")
        p = Path(value)
        if is_dir and not p.is_dir():
            raise ConfigError(f"{name} {value!r} is not a directory")
        if not is_dir and not p.is_file():
            raise ConfigError(f"{name} {value!r} is not a file")

    # --- identity ---

    def resolved_dict(self) -> dict:
        d = asdict(self)
        d["matrix"] = asdict(self.matrix) if self.matrix else None
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.resolved_dict(), sort_keys=True)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def resolve_k(k_mode: str, k_value: float, ranked: RankedKeyframes) -> int:
    """Number of keyframes to keep, clamped to [1, n_frames].

    fraction: ceil(value * n); absolute: value as-is; threshold: count of
    frames with similarity >= value (at least 1).
    """
    n = int(ranked.order.shape[0])
    if k_mode == "fraction":
        # tiny epsilon guards against float slop pushing an exact product up
        k = max(1, math.ceil(k_value * n - 1e-9))
    elif k_mode == "absolute":
        k = int(k_value)
    elif k_mode == "threshold":
        k = int(np.count_nonzero(ranked.scores >= k_value))
        k = max(1, k)
    else:
        raise ConfigError(f"k_mode must be one of {K_MODES}, got {k_mode!r}")
    return min(max(1, k), n)
