import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gazespiral.metrics import FeatureSequence, _cosine_cost_matrix
from gazespiral.query import QuerySpan, candidate_fixations, find_similar_spans


def one_hot(i, dim=8):
    v = np.zeros(dim)
    v[i] = 1.0
    return v


def seq_from_codes(codes, rec_id, dim=8):
    return FeatureSequence(np.stack([one_hot(c, dim) for c in codes]), recording_id=rec_id)


def window_scan_oracle(query, target, threshold):
    """Exhaustive scan re-deriving window similarities, no suppression."""
    m, n = query.shape[0], target.shape[0]
    out = []
    for s in range(n - m + 1):
        cost = _cosine_cost_matrix(query, target[s : s + m])
        sim = 1.0 - float(np.diagonal(cost).mean())
        if sim >= threshold:
            out.append((s, sim))
    return out


def test_self_query_is_top_hit():
    source = seq_from_codes([0, 1, 2, 3, 4, 5], "r")
    results = find_similar_spans(QuerySpan("r", 1, 3), source, [source], threshold=0.5)
    assert results
    top = results[0]
    assert top.similarity == pytest.approx(1.0)
    assert top.rank == 1
    assert (top.span.start_fixation, top.span.end_fixation) == (1, 3)


def test_orthogonal_target_gives_nothing():
    source = seq_from_codes([0, 1], "src")
    target = seq_from_codes([4, 5, 6, 7], "tgt")
    assert find_similar_spans(QuerySpan("src", 0, 1), source, [target], threshold=0.1) == []


def test_planted_repeat_found_twice():
    pattern = [0, 1, 2]
    noise1 = [5, 6, 7, 5]
    noise2 = [6, 7, 6]
    codes = pattern + noise1 + pattern + noise2
    source = seq_from_codes(codes, "r")
    results = find_similar_spans(QuerySpan("r", 0, 2), source, [source], threshold=0.8)
    spans = sorted((r.span.start_fixation, r.span.end_fixation) for r in results)
    assert spans == [(0, 2), (7, 9)]
    # matches the exhaustive scan beyond threshold
    oracle = window_scan_oracle(source.items[0:3], source.items, 0.8)
    assert sorted(s for s, _ in oracle) == [0, 7]


def test_query_longer_than_target_skipped():
    source = seq_from_codes([0, 1, 2, 3], "src")
    short = seq_from_codes([0, 1], "tgt")
    assert find_similar_spans(QuerySpan("src", 0, 3), source, [short], threshold=0.0) == []


def test_results_sorted_and_ranked():
    source = seq_from_codes([0, 1, 0, 2], "r")
    results = find_similar_spans(QuerySpan("r", 0, 0), source, [source], threshold=0.0)
    sims = [r.similarity for r in results]
    assert sims == sorted(sims, reverse=True)
    assert [r.rank for r in results] == list(range(1, len(results) + 1))


def test_nms_no_overlap_within_recording():
    # every window of a constant sequence matches; suppression keeps
    # disjoint spans only
    source = seq_from_codes([0] * 10, "r")
    results = find_similar_spans(QuerySpan("r", 0, 2), source, [source], threshold=0.9)
    spans = [(r.span.start_fixation, r.span.end_fixation) for r in results]
    for i, (s1, e1) in enumerate(spans):
        for s2, e2 in spans[i + 1 :]:
            assert e1 < s2 or e2 < s1


def test_threshold_anti_monotone():
    rng = np.random.default_rng(8)
    source = FeatureSequence(rng.random((12, 6)), recording_id="r")
    lo = find_similar_spans(QuerySpan("r", 2, 4), source, [source], threshold=0.2)
    hi = find_similar_spans(QuerySpan("r", 2, 4), source, [source], threshold=0.9)
    lo_spans = {(r.span.start_fixation, r.span.end_fixation) for r in lo}
    hi_spans = {(r.span.start_fixation, r.span.end_fixation) for r in hi}
    assert len(hi) <= len(lo)
    assert hi_spans <= lo_spans


def test_max_results_cap():
    source = seq_from_codes([0] * 30, "r")
    results = find_similar_spans(
        QuerySpan("r", 0, 0), source, [source], threshold=0.0, max_results=3
    )
    assert len(results) == 3


def test_bad_inputs():
    source = seq_from_codes([0, 1, 2], "r")
    with pytest.raises(ValueError, match="threshold"):
        find_similar_spans(QuerySpan("r", 0, 1), source, [source], threshold=1.5)
    with pytest.raises(ValueError, match="belong"):
        find_similar_spans(QuerySpan("other", 0, 1), source, [source])
    with pytest.raises(ValueError, match="bounds"):
        find_similar_spans(QuerySpan("r", 0, 5), source, [source])
    with pytest.raises(ValueError):
        QuerySpan("r", 3, 1)


def test_candidate_fixations_unique_match():
    source = seq_from_codes([0, 1, 2, 3], "r")
    results = candidate_fixations(QuerySpan("r", 1, 1), source, source, threshold=0.9)
    assert len(results) == 1
    assert results[0].span.start_fixation == 1
    assert results[0].similarity == pytest.approx(1.0)


def test_candidate_fixations_threshold_zero_returns_all():
    source = seq_from_codes([0, 1, 2, 3, 0], "r")
    results = candidate_fixations(QuerySpan("r", 0, 0), source, source, threshold=0.0,
                                  max_results=10)
    assert len(results) == 5
    sims = [r.similarity for r in results]
    assert sims == sorted(sims, reverse=True)


def test_candidate_fixations_identical_dwells():
    codes = [0, 5, 0, 6]
    source = seq_from_codes(codes, "r")
    results = candidate_fixations(QuerySpan("r", 0, 0), source, source, threshold=0.9)
    starts = sorted(r.span.start_fixation for r in results)
    assert starts == [0, 2]
    assert all(r.similarity > 0.9 for r in results)


def test_candidate_fixations_requires_single_fixation():
    source = seq_from_codes([0, 1, 2], "r")
    with pytest.raises(ValueError, match="single"):
        candidate_fixations(QuerySpan("r", 0, 1), source, source)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=50, deadline=None)
def test_kept_spans_subset_of_oracle(seed):
    rng = np.random.default_rng(seed)
    source = FeatureSequence(rng.random((15, 5)), recording_id="r")
    start = int(rng.integers(0, 13))
    end = start + int(rng.integers(0, 3))
    threshold = float(rng.uniform(0.2, 0.95))
    results = find_similar_spans(QuerySpan("r", start, end), source, [source], threshold=threshold)
    oracle = dict(window_scan_oracle(source.items[start : end + 1], source.items, threshold))
    for r in results:
        assert r.span.start_fixation in oracle
        assert r.similarity == pytest.approx(oracle[r.span.start_fixation], abs=1e-12)
