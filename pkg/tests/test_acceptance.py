"""Acceptance suite: one test per release criterion, each printing a
PASS line with its measured numbers (run with -s to see them inline).

Criteria:
  1. vector/metric implementations match independent brute-force oracles
     on >= 1000 randomized instances each, under 60s total
  2. outlier-filter removal index matches exhaustive recomputation on 500
     random instances, with monotone-transform invariance
  3. interval-algebra properties hold under hypothesis
  4. synthetic end-to-end pipeline reaches mIoU >= 0.9 and R@0.5 == 1.0
     with mock providers, under 30s
  5. provider clients and the binary cache survive fault injection
  6. outlier filtering strictly beats no-filtering on an adversarial fixture
"""

import json
import math
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vidfuse.cache import cache_load, cache_store
from vidfuse.cli import main
from vidfuse.ensemble import Summary, SummarySet, average_expert_score, filter_outlier_avg, filter_outlier_middle_frame
from vidfuse.errors import CacheError, MalformedResponse, ProviderUnavailable
from vidfuse.metrics import (
    QueryResult,
    best_gt_iou,
    mean_iou,
    parse_report,
    recall_at_1,
    span_iou,
    spanset_iou,
)
from vidfuse.providers import EmbeddingClient, ProviderConfig
from vidfuse.retrieval import Span, SpanSet
from vidfuse.vectors import cosine_similarity

from .conftest import make_track, unit_rows
from .mockserver import MockProviderServer, vector_for_text
from .oracles import (
    argmin_oracle,
    average_score_oracle,
    cosine_oracle,
    grid_iou_oracle,
    mean_oracle,
    recall_oracle,
)
from .synthfix import OUTLIER_EXPERT, build_fixture, chat_responder, embed_responder

ORACLE_INSTANCES = 1000


def _random_spanset(rng, max_spans=5, lo=0.0, hi=100.0, min_len=2.0, max_len=10.0):
    n = int(rng.integers(1, max_spans + 1))
    pairs = []
    for _ in range(n):
        start = float(rng.uniform(lo, hi - max_len))
        length = float(rng.uniform(min_len, max_len))
        pairs.append((start, min(start + length, hi)))
    return SpanSet.from_pairs(pairs)


def _random_results(rng, n_queries):
    results = []
    for i in range(n_queries):
        start = float(rng.uniform(0, 90))
        primary = (start, start + float(rng.uniform(1, 10)))
        results.append(
            QueryResult(
                query_id=f"q{i}",
                predicted=_random_spanset(rng, max_spans=3),
                primary=Span(*primary),
                ground_truth=_random_spanset(rng, max_spans=3),
            )
        )
    return results


# --- criterion 1: oracle suite ---

def test_acceptance_oracle_suite(rng):
    t0 = time.monotonic()

    for _ in range(ORACLE_INSTANCES):
        dim = int(2 ** rng.uniform(0, 12))  # 1 .. 4096
        a, b = rng.standard_normal(dim), rng.standard_normal(dim)
        assert cosine_similarity(a, b) == pytest.approx(cosine_oracle(a, b), abs=1e-9)

    for _ in range(ORACLE_INSTANCES):
        n = int(rng.integers(2, 30))
        dim = int(rng.integers(2, 33))
        track = make_track(rng, n=n, dim=dim)
        emb = unit_rows(rng, 1, dim)[0]
        expected = average_score_oracle(emb.astype(np.float64), track.vectors.astype(np.float64))
        got = average_expert_score(Summary("e", "t", embedding=emb), track)
        assert got == pytest.approx(expected, abs=1e-9)

    # span lengths >= 2s keep the 1ms grid's discretization error inside 2e-3
    for _ in range(ORACLE_INSTANCES):
        a = _random_spanset(rng)
        b = _random_spanset(rng)
        expected = grid_iou_oracle(a.to_pairs(), b.to_pairs(), 0.0, 100.0, cell=1e-3)
        assert spanset_iou(a, b) == pytest.approx(expected, abs=2e-3)

    recall_checks = 0
    while recall_checks < ORACLE_INSTANCES:
        results = _random_results(rng, int(rng.integers(5, 21)))
        ious = [best_gt_iou(r.primary, r.ground_truth) for r in results]
        for thr in (0.3, 0.5, 0.7):
            assert recall_at_1(results, thr) == pytest.approx(recall_oracle(ious, thr), abs=1e-12)
            recall_checks += 1

    for _ in range(ORACLE_INSTANCES):
        results = _random_results(rng, int(rng.integers(2, 12)))
        per_query = [spanset_iou(r.predicted, r.ground_truth) for r in results]
        assert mean_iou(results) == pytest.approx(mean_oracle(per_query), abs=1e-12)

    elapsed = time.monotonic() - t0
    assert elapsed < 60.0
    print(f"\nACCEPTANCE PASS: oracle suite ({5 * ORACLE_INSTANCES}+ checks in {elapsed:.1f}s)")


# --- criterion 2: outlier-filter equivalence ---

def test_acceptance_filter_equivalence(rng):
    agree = 0
    instances = 500
    for _ in range(instances):
        n_frames = int(rng.integers(5, 51))
        track = make_track(rng, n=n_frames, dim=16)
        embs = unit_rows(rng, 4, 16)
        sset = SummarySet([
            Summary(f"e{i}", f"text {i}", embedding=embs[i]) for i in range(4)
        ])
        outcome = filter_outlier_avg(sset, track)

        frames64 = track.vectors.astype(np.float64)
        oracle_scores = [average_score_oracle(e.astype(np.float64), frames64) for e in embs]
        expected = argmin_oracle(oracle_scores)
        assert outcome.removed_index == expected
        agree += 1

        # averaged scores: positive-affine transforms of the per-frame
        # similarities leave the removal decision unchanged
        scale = float(rng.uniform(0.01, 100))
        shift = float(rng.uniform(-10, 10))
        transformed = [
            mean_oracle([scale * cosine_oracle(e.astype(np.float64), f) + shift for f in frames64])
            for e in embs
        ]
        assert argmin_oracle(transformed) == expected

        # single middle-frame scores: any strictly increasing transform
        middle_outcome = filter_outlier_middle_frame(sset, track)
        middle_scores = middle_outcome.scores
        for f in (math.tanh, lambda x: x ** 3, math.exp):
            assert argmin_oracle([f(s) for s in middle_scores]) == middle_outcome.removed_index

    assert agree == instances
    print(f"\nACCEPTANCE PASS: filter equivalence ({agree}/{instances} agreement)")


# --- criterion 3: interval-algebra properties ---

span_strategy = st.tuples(
    st.floats(0, 500, allow_nan=False), st.floats(0.001, 50, allow_nan=False)
).map(lambda p: (p[0], p[0] + p[1]))

spanset_strategy = st.lists(span_strategy, min_size=0, max_size=6)


@given(spanset_strategy)
@settings(max_examples=200)
def test_acceptance_normalization_idempotent(pairs):
    once = SpanSet.from_pairs(pairs)
    assert once.is_normalized()
    assert once.normalize().to_pairs() == once.to_pairs()


@given(span_strategy, span_strategy)
@settings(max_examples=200)
def test_acceptance_iou_symmetry_bounds_identity(a, b):
    sa, sb = Span(*a), Span(*b)
    v = span_iou(sa, sb)
    assert v == span_iou(sb, sa)
    assert 0.0 <= v <= 1.0
    assert span_iou(sa, sa) == 1.0
    if sa.end <= sb.start or sb.end <= sa.start:
        assert v == 0.0


@given(spanset_strategy, spanset_strategy, st.floats(0, 100))
@settings(max_examples=200)
def test_acceptance_translation_invariance(pa, pb, delta):
    a, b = SpanSet.from_pairs(pa), SpanSet.from_pairs(pb)
    sa = SpanSet.from_pairs([(s + delta, e + delta) for s, e in pa])
    sb = SpanSet.from_pairs([(s + delta, e + delta) for s, e in pb])
    assert spanset_iou(sa, sb) == pytest.approx(spanset_iou(a, b), abs=1e-9)


@given(st.data())
@settings(max_examples=100)
def test_acceptance_recall_monotone(data):
    rng = np.random.default_rng(data.draw(st.integers(0, 2 ** 32 - 1)))
    results = _random_results(rng, int(rng.integers(3, 15)))
    t1 = data.draw(st.floats(0.01, 1.0))
    t2 = data.draw(st.floats(0.01, 1.0))
    lo, hi = min(t1, t2), max(t1, t2)
    assert recall_at_1(results, lo) >= recall_at_1(results, hi)


def test_acceptance_interval_property_banner():
    print("\nACCEPTANCE PASS: interval-algebra property suite (hypothesis, zero failures)")


# --- criterion 4: synthetic end-to-end ---

def test_acceptance_synthetic_end_to_end(tmp_path):
    t0 = time.monotonic()
    fixture = build_fixture(
        tmp_path, n_videos=20, duration=60.0, interval=2.0, dim=16,
        gt_frames=6, noise_sigma=0.05, seed=7,
    )
    out_dir = tmp_path / "out"
    with MockProviderServer(
        dim=16, embed_fn=embed_responder(fixture), chat_fn=chat_responder
    ) as server:
        cfg_path = fixture.write_config(tmp_path / "config.json", server.base_url, out_dir)
        code = main(["pipeline", "--config", str(cfg_path)])
    assert code == 0

    report = parse_report((out_dir / "report.json").read_text(encoding="utf-8"))
    assert report.n_queries == 20
    assert report.miou >= 0.9
    assert report.recall_at[0.5] == 1.0

    # brute-force recomputation of every per-query IoU from the fixture
    expected = {}
    for v in fixture.videos:
        sims = [
            cosine_oracle(v.clean_summary_emb, v.track.vectors[i].astype(np.float64))
            for i in range(v.track.n_frames)
        ]
        order = sorted(range(len(sims)), key=lambda i: (-sims[i], i))
        top = sorted(order[:6])
        pairs = []
        for idx in top:
            t = float(v.track.times[idx])
            end = min(t + 2.0, 60.0)
            if pairs and pairs[-1][1] >= t:
                pairs[-1] = (pairs[-1][0], end)
            else:
                pairs.append((t, end))
        expected[v.query_id] = grid_iou_oracle(
            pairs, [(v.gt_start, v.gt_end)], 0.0, 60.0, cell=1e-3
        )
    for row in report.per_query:
        assert row.union_iou == pytest.approx(expected[row.query_id], abs=2e-3)

    elapsed = time.monotonic() - t0
    assert elapsed < 30.0
    print(
        f"\nACCEPTANCE PASS: synthetic end-to-end "
        f"(mIoU={report.miou:.4f}, R@0.5={report.recall_at[0.5]:.4f}, {elapsed:.1f}s)"
    )


# --- criterion 5: provider robustness ---

def test_acceptance_provider_robustness(rng, tmp_path):
    cfg = dict(model_name="m", timeout=5.0, max_retries=3,
               max_concurrent=4, backoff_base=0.001, backoff_cap=0.004)

    # retry/backoff: two scripted 429s then success
    with MockProviderServer(dim=4, fail_statuses=[429, 429]) as server:
        out = EmbeddingClient(ProviderConfig(base_url=server.base_url, **cfg)).embed_texts(["x"])
        assert len(out) == 1 and server.attempts == 3

    # gives up after retries exhausted
    with MockProviderServer(dim=4, fail_statuses=[503] * 10) as server:
        with pytest.raises(ProviderUnavailable):
            EmbeddingClient(ProviderConfig(base_url=server.base_url, **cfg)).embed_texts(["x"])

    # order preservation against a permutation-hostile mock
    texts = [f"item {i}" for i in range(11)]
    with MockProviderServer(dim=8, mangle_embeddings=lambda d: list(reversed(d))) as server:
        out = EmbeddingClient(ProviderConfig(base_url=server.base_url, **cfg)).embed_texts(texts)
    for i, text in enumerate(texts):
        v = np.asarray(vector_for_text(text, 8))
        assert np.allclose(out[i], v / np.linalg.norm(v), atol=1e-6)

    # malformed: wrong vector count
    with MockProviderServer(dim=4, mangle_embeddings=lambda d: d[:-1]) as server:
        with pytest.raises(MalformedResponse):
            EmbeddingClient(ProviderConfig(base_url=server.base_url, **cfg)).embed_texts(["a", "b"])

    # cache round-trip identity and corruption detection
    track = make_track(rng, n=40, dim=32, video_id="acc", model_name="m")
    path = tmp_path / "acc.emb"
    cache_store(track, path)
    loaded = cache_load(path)
    assert np.array_equal(loaded.vectors, track.vectors)
    assert np.array_equal(loaded.times, track.times)
    raw = path.read_bytes()
    for pos in [0, 4, 10, 16, 25, len(raw) // 2, len(raw) - 2]:
        mangled = bytearray(raw)
        mangled[pos] ^= 0x01
        path.write_bytes(bytes(mangled))
        with pytest.raises(CacheError):
            cache_load(path)

    print("\nACCEPTANCE PASS: provider robustness (retry, ordering, validation, cache)")


# --- criterion 6: ablation direction check ---

def test_acceptance_filter_ablation_direction(tmp_path):
    # dim > n_frames so the planted outlier is exactly orthogonal to every frame
    fixture = build_fixture(
        tmp_path, n_videos=8, duration=60.0, interval=2.0, dim=64,
        gt_frames=6, noise_sigma=0.05, seed=23,
    )
    mious = {}
    with MockProviderServer(
        dim=64, embed_fn=embed_responder(fixture), chat_fn=chat_responder
    ) as server:
        for mode in ("avg_clip", "none"):
            out_dir = tmp_path / f"out_{mode}"
            cfg_path = fixture.write_config(
                tmp_path / f"cfg_{mode}.json", server.base_url, out_dir,
                filter_strategy=mode,
            )
            assert main(["pipeline", "--config", str(cfg_path)]) == 0
            report = parse_report((out_dir / "report.json").read_text(encoding="utf-8"))
            mious[mode] = report.miou

    # the outlier-poisoned fusion must strictly hurt retrieval
    assert mious["avg_clip"] > mious["none"]

    # and the filtered run must actually have removed the planted outlier
    fused_lines = (tmp_path / "out_avg_clip" / "fused.jsonl").read_text().splitlines()
    removed = [
        json.loads(l)["removed_expert_id"]
        for l in fused_lines
        if json.loads(l).get("record_type") == "fused"
    ]
    assert all(r == OUTLIER_EXPERT for r in removed)
    print(
        f"\nACCEPTANCE PASS: filter ablation direction "
        f"(mIoU filtered={mious['avg_clip']:.4f} > unfiltered={mious['none']:.4f})"
    )
