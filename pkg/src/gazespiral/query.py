"""Content-based similarity search over fixation sequences.

A query span slides over each target sequence one fixation at a time;
window similarity is one minus the mean positional cosine distance.
Overlapping hits within a recording are suppressed so the results can be
highlighted as disjoint spans on the spiral.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .metrics import FeatureSequence, _cosine_cost_matrix

DEFAULT_THRESHOLD = 0.8
DEFAULT_MAX_RESULTS = 10


@dataclass(frozen=True)
class QuerySpan:
    recording_id: str
    start_fixation: int
    end_fixation: int

    def __post_init__(self):
        if self.start_fixation < 0 or self.end_fixation < self.start_fixation:
            raise ValueError("invalid query span")

    def __len__(self) -> int:
        return self.end_fixation - self.start_fixation + 1


@dataclass
class QueryResult:
    recording_id: str
    span: QuerySpan
    similarity: float
    rank: int = 0

    def to_dict(self) -> dict:
        return {
            "recording_id": self.recording_id,
            "start_fixation": self.span.start_fixation,
            "end_fixation": self.span.end_fixation,
            "similarity": self.similarity,
            "rank": self.rank,
        }


def _window_similarities(query: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Similarity of every length-|query| window of target, step 1."""
    m = query.shape[0]
    n = target.shape[0]
    cost = _cosine_cost_matrix(query, target)
    count = n - m + 1
    sims = np.empty(count, dtype=np.float64)
    for s in range(count):
        positional = cost[np.arange(m), s + np.arange(m)]
        sims[s] = 1.0 - positional.mean()
    return sims


def find_similar_spans(
    q: QuerySpan,
    source: FeatureSequence,
    targets: list[FeatureSequence],
    threshold: float = DEFAULT_THRESHOLD,
    max_results: int = DEFAULT_MAX_RESULTS,
) -> list[QueryResult]:
    """Find spans similar to the query across the target recordings.

    Within one recording returned spans never overlap (greedy non-maximum
    suppression by similarity); per recording at most max_results spans at
    or above the threshold are kept. Targets shorter than the query simply
    yield nothing. Results come back sorted by descending similarity with
    1-based ranks.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must be in [0, 1]")
    if q.recording_id != source.recording_id:
        raise ValueError("query span does not belong to the source sequence")
    if q.end_fixation >= len(source):
        raise ValueError("query span out of bounds")
    query = source.items[q.start_fixation : q.end_fixation + 1]
    m = query.shape[0]

    results: list[QueryResult] = []
    for target in targets:
        n = len(target)
        if n < m:
            continue
        sims = _window_similarities(query, target.items)
        order = sorted(range(len(sims)), key=lambda s: (-sims[s], s))
        kept: list[int] = []
        for s in order:
            if sims[s] < threshold:
                break
            if any(s < k + m and k < s + m for k in kept):
                continue
            kept.append(s)
            if len(kept) >= max_results:
                break
        for s in kept:
            span = QuerySpan(target.recording_id, s, s + m - 1)
            results.append(QueryResult(target.recording_id, span, float(sims[s])))

    results.sort(key=lambda r: (-r.similarity, r.recording_id, r.span.start_fixation))
    for rank, result in enumerate(results, start=1):
        result.rank = rank
    return results


def candidate_fixations(
    q: QuerySpan,
    source: FeatureSequence,
    rec: FeatureSequence,
    threshold: float = DEFAULT_THRESHOLD,
    max_results: int = DEFAULT_MAX_RESULTS,
) -> list[QueryResult]:
    """Single-fixation recommendation query used by the annotation flow."""
    if len(q) != 1:
        raise ValueError("candidate_fixations expects a single-fixation span")
    return find_similar_spans(q, source, [rec], threshold=threshold, max_results=max_results)


def results_to_json(results: list[QueryResult]) -> list[dict]:
    return [r.to_dict() for r in results]
