"""Clustering and 2D embedding of pairwise scanpath distances.

Agglomerative average-linkage clustering produces a dendrogram that can be
cut at a height or to a target cluster count. The 2D embedding minimizes
raw stress with SMACOF majorization; the ``EMBEDDINGS`` registry is the
hook for swapping in another reducer without touching callers.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .metrics import DistanceMatrix


@dataclass
class Dendrogram:
    """Merge list in scipy convention: leaves are 0..n-1, the i-th merge
    creates cluster id n+i."""

    n_leaves: int
    merges: list[tuple[int, int, float, int]]

    def to_json(self) -> str:
        return json.dumps(
            {
                "n_leaves": self.n_leaves,
                "merges": [
                    {"a": a, "b": b, "height": h, "id": new_id} for a, b, h, new_id in self.merges
                ],
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "Dendrogram":
        doc = json.loads(text)
        return cls(
            n_leaves=doc["n_leaves"],
            merges=[(m["a"], m["b"], m["height"], m["id"]) for m in doc["merges"]],
        )


@dataclass
class Embedding2D:
    points: np.ndarray  # (n, 2)
    stress: float
    iterations_run: int
    seed: int = 0
    stress_history: list[float] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(
            {
                "method": "smacof",
                "points": self.points.tolist(),
                "stress": self.stress,
                "iterations_run": self.iterations_run,
                "seed": self.seed,
            }
        )


@dataclass
class GlyphLayout:
    placements: list[tuple[tuple[float, float], float]]  # (center px, scale)
    canvas_px: int
    glyph_px: int


def hca_average_linkage(matrix: DistanceMatrix) -> Dendrogram:
    """Agglomerative clustering with average (UPGMA) linkage.

    Ties are broken toward the lexicographically smallest (i, j) cluster-id
    pair, so the result is deterministic.
    """
    n = matrix.n
    if n < 2:
        raise ValueError("need at least 2 items")
    dist: dict[tuple[int, int], float] = {}
    for i in range(n):
        for j in range(i + 1, n):
            dist[(i, j)] = float(matrix.values[i, j])
    sizes = {i: 1 for i in range(n)}
    active = set(range(n))
    merges = []
    next_id = n
    while len(active) > 1:
        best_pair = None
        best_d = None
        for i in sorted(active):
            for j in sorted(active):
                if i >= j:
                    continue
                d = dist[(i, j)]
                if best_d is None or d < best_d:
                    best_d = d
                    best_pair = (i, j)
        i, j = best_pair
        new_id = next_id
        next_id += 1
        for k in sorted(active):
            if k in (i, j):
                continue
            dik = dist[tuple(sorted((i, k)))]
            djk = dist[tuple(sorted((j, k)))]
            dist[(k, new_id)] = (sizes[i] * dik + sizes[j] * djk) / (sizes[i] + sizes[j])
        sizes[new_id] = sizes[i] + sizes[j]
        active.discard(i)
        active.discard(j)
        active.add(new_id)
        merges.append((i, j, best_d, new_id))
    return Dendrogram(n_leaves=n, merges=merges)


def _partition_after(dendrogram: Dendrogram, n_merges: int) -> list[list[int]]:
    members = {i: [i] for i in range(dendrogram.n_leaves)}
    for a, b, _h, new_id in dendrogram.merges[:n_merges]:
        members[new_id] = members.pop(a) + members.pop(b)
    return sorted((sorted(c) for c in members.values()), key=lambda c: c[0])


def cut_dendrogram(dendrogram: Dendrogram, height: float) -> list[list[int]]:
    """Partition of the leaves after applying all merges at or below the
    given height. Clusters are sorted by their smallest leaf."""
    applied = sum(1 for m in dendrogram.merges if m[2] <= height)
    return _partition_after(dendrogram, applied)


def cut_dendrogram_k(dendrogram: Dendrogram, n_clusters: int) -> list[list[int]]:
    """Partition with exactly n_clusters clusters (merge-order cut)."""
    if not 1 <= n_clusters <= dendrogram.n_leaves:
        raise ValueError("n_clusters out of range")
    return _partition_after(dendrogram, dendrogram.n_leaves - n_clusters)


def embed_smacof(
    matrix: DistanceMatrix,
    max_iter: int = 500,
    eps: float = 1e-12,
    seed: int = 42,
    n_init: int = 8,
) -> Embedding2D:
    """Metric MDS by SMACOF stress majorization.

    Minimizes raw stress sum_{i<j} (d_ij - |p_i - p_j|)^2 with Guttman
    transform updates from seeded random starts; within a run the stress
    never increases. Each run stops after max_iter updates or when the
    relative stress improvement drops below eps. Majorization can stall in
    local minima (the unit square is the textbook case), so n_init starts
    are drawn from the seeded stream and the lowest-stress result wins.
    """
    n = matrix.n
    if n < 2:
        raise ValueError("need at least 2 items")
    if n_init < 1:
        raise ValueError("n_init must be >= 1")
    d = matrix.values
    rng = np.random.default_rng(seed)
    scale = d.max() if d.max() > 0 else 1.0

    iu = np.triu_indices(n, k=1)

    def all_dists(p):
        diff = p[:, None, :] - p[None, :, :]
        return np.sqrt((diff**2).sum(axis=2))

    def stress_of(dd):
        return float(((d[iu] - dd[iu]) ** 2).sum())

    best: tuple[np.ndarray, list[float], int] | None = None
    for _ in range(n_init):
        x = rng.uniform(-scale / 2, scale / 2, size=(n, 2))
        dists = all_dists(x)
        history = [stress_of(dists)]
        iterations = 0
        for _ in range(max_iter):
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.where(dists > 0, d / dists, 0.0)
            b = -ratio
            np.fill_diagonal(b, 0.0)
            np.fill_diagonal(b, -b.sum(axis=1))
            x = (b @ x) / n
            dists = all_dists(x)
            iterations += 1
            history.append(stress_of(dists))
            prev, cur = history[-2], history[-1]
            if cur == 0.0 or (prev > 0 and (prev - cur) / prev < eps):
                break
        if best is None or history[-1] < best[1][-1]:
            best = (x, history, iterations)

    x, history, iterations = best
    return Embedding2D(
        points=x,
        stress=history[-1],
        iterations_run=iterations,
        seed=seed,
        stress_history=history,
    )


EMBEDDINGS = {"smacof": embed_smacof}


def layout_glyphs(
    embedding: Embedding2D,
    glyph_px: int,
    canvas_px: int,
    max_rounds: int = 100,
) -> GlyphLayout:
    """Place glyph centers on a canvas from the embedding.

    The embedding is mapped with a uniform scale (so neighborhoods are
    preserved), then overlapping glyphs are pushed apart pairwise along
    their center line until every center pair is at least glyph_px apart.
    """
    points = np.asarray(embedding.points, dtype=np.float64)
    n = len(points)
    if n < 1:
        raise ValueError("empty embedding")
    pad = 4
    margin = glyph_px / 2 + pad
    usable = canvas_px - 2 * margin
    cells = int(np.ceil(np.sqrt(n)))
    min_canvas = int(cells * glyph_px + 2 * margin + 1)
    if usable <= 0 or n * glyph_px**2 > usable**2:
        raise ValueError(
            f"canvas {canvas_px}px too small for {n} glyphs of {glyph_px}px; "
            f"need at least {min_canvas}px"
        )

    span = points.max(axis=0) - points.min(axis=0)
    extent = float(span.max())
    if extent == 0:
        centers = np.full((n, 2), canvas_px / 2.0)
    else:
        scale = usable / extent
        centered = (points - (points.min(axis=0) + span / 2)) * scale
        centers = centered + canvas_px / 2.0

    for _ in range(max_rounds):
        moved = False
        for i in range(n):
            for j in range(i + 1, n):
                delta = centers[j] - centers[i]
                dist = float(np.hypot(*delta))
                if dist >= glyph_px:
                    continue
                if dist == 0:
                    direction = np.array([1.0, 0.0])
                else:
                    direction = delta / dist
                shift = (glyph_px - dist) / 2.0
                centers[i] -= direction * shift
                centers[j] += direction * shift
                moved = True
        centers = np.clip(centers, margin, canvas_px - margin)
        if not moved:
            break
    else:
        deltas = centers[:, None, :] - centers[None, :, :]
        dists = np.sqrt((deltas**2).sum(axis=2))
        np.fill_diagonal(dists, np.inf)
        if dists.min() < glyph_px - 1e-6:
            raise ValueError(
                f"could not resolve glyph overlaps on a {canvas_px}px canvas; "
                f"need at least {min_canvas}px"
            )

    placements = [((float(cx), float(cy)), 1.0) for cx, cy in centers]
    return GlyphLayout(placements=placements, canvas_px=canvas_px, glyph_px=glyph_px)
