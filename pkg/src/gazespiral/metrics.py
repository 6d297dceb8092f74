"""Scanpath comparison: cosine cost, alignment kernels, distance matrices.

Two sequence flavors are supported: feature sequences (one descriptor per
fixation, substitution cost = cosine distance) and symbol sequences (one
AOI symbol per fixation, 0/1 substitution cost). Default gap costs are
0.5 for feature-based and 1.0 for string-based alignment.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

FEATURE_GAP_DEFAULT = 0.5
SYMBOL_GAP_DEFAULT = 1.0

METHODS = ("levenshtein", "smith_waterman", "dtw")


@dataclass
class FeatureSequence:
    items: np.ndarray  # (n, d)
    recording_id: str = ""

    def __post_init__(self):
        self.items = np.asarray(self.items, dtype=np.float64)
        if self.items.ndim != 2:
            raise ValueError("feature sequence items must be a 2D array")

    def __len__(self) -> int:
        return self.items.shape[0]


@dataclass
class SymbolSequence:
    items: list
    recording_id: str = ""

    def __post_init__(self):
        self.items = list(self.items)

    def __len__(self) -> int:
        return len(self.items)


@dataclass
class DistanceMatrix:
    n: int
    values: np.ndarray
    method: str = ""
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.n, self.n):
            raise ValueError(f"values must be {self.n}x{self.n}")

    def to_json(self) -> str:
        return json.dumps(
            {"n": self.n, "method": self.method, "options": self.options, "values": self.values.tolist()}
        )

    @classmethod
    def from_json(cls, text: str) -> "DistanceMatrix":
        doc = json.loads(text)
        return cls(n=doc["n"], values=np.array(doc["values"]), method=doc.get("method", ""),
                   options=doc.get("options", {}))


def cosine_distance(u: np.ndarray, v: np.ndarray) -> float:
    """1 - cosine similarity; in [0, 1] for non-negative vectors. A zero
    vector is at distance 1 from everything.

    Computed as half the squared distance of the unit-normalized vectors,
    which is the same quantity but returns exactly 0 for identical inputs
    (self-matches must score exactly 1 downstream)."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0 or nv == 0:
        return 1.0
    diff = u / nu - v / nv
    return float(np.clip(0.5 * np.dot(diff, diff), 0.0, 1.0))


def _cosine_cost_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    ua = np.divide(a, na[:, None], out=np.zeros_like(a), where=na[:, None] > 0)
    ub = np.divide(b, nb[:, None], out=np.zeros_like(b), where=nb[:, None] > 0)
    diff = ua[:, None, :] - ub[None, :, :]
    cost = 0.5 * (diff**2).sum(axis=2)
    cost[na == 0, :] = 1.0
    cost[:, nb == 0] = 1.0
    return np.clip(cost, 0.0, 1.0)


def _as_sequence(seq) -> tuple[str, object]:
    if isinstance(seq, FeatureSequence):
        return "feature", seq.items
    if isinstance(seq, SymbolSequence):
        return "symbol", seq.items
    if isinstance(seq, str):
        return "symbol", list(seq)
    if isinstance(seq, np.ndarray) and seq.ndim == 2:
        return "feature", np.asarray(seq, dtype=np.float64)
    if isinstance(seq, (list, tuple)):
        return "symbol", list(seq)
    raise TypeError(f"cannot interpret {type(seq).__name__} as a sequence")


def _cost_matrix(a, b) -> tuple[np.ndarray, float]:
    """Substitution cost matrix and the default gap cost for the pair."""
    kind_a, items_a = _as_sequence(a)
    kind_b, items_b = _as_sequence(b)
    if kind_a != kind_b:
        raise ValueError(f"mixed sequence kinds: {kind_a} vs {kind_b}")
    if len(items_a) == 0 or len(items_b) == 0:
        raise ValueError("empty sequence")
    if kind_a == "feature":
        return _cosine_cost_matrix(items_a, items_b), FEATURE_GAP_DEFAULT
    cost = np.array([[0.0 if x == y else 1.0 for y in items_b] for x in items_a])
    return cost, SYMBOL_GAP_DEFAULT


def levenshtein_dp(cost: np.ndarray, gap: float) -> np.ndarray:
    """Full global-alignment table, boundary row/column included."""
    m, n = cost.shape
    table = np.zeros((m + 1, n + 1), dtype=np.float64)
    table[:, 0] = np.arange(m + 1) * gap
    table[0, :] = np.arange(n + 1) * gap
    for i in range(1, m + 1):
        for j in range(1, n + 1):
            table[i, j] = min(
                table[i - 1, j - 1] + cost[i - 1, j - 1],
                table[i - 1, j] + gap,
                table[i, j - 1] + gap,
            )
    return table


def levenshtein(a, b, gap: float | None = None, normalize: bool = False) -> float:
    """Global alignment cost; substitutions cost the cosine distance
    (features) or 0/1 (symbols), insertions and deletions cost ``gap``.
    With ``normalize`` the cost is divided by max(|a|, |b|)."""
    cost, default_gap = _cost_matrix(a, b)
    gap = default_gap if gap is None else gap
    if gap <= 0:
        raise ValueError("gap must be positive")
    value = float(levenshtein_dp(cost, gap)[-1, -1])
    if normalize:
        value /= max(cost.shape)
    return value


def smith_waterman(a, b, gap: float | None = None) -> tuple[float, float]:
    """Local alignment. Match score is 1 - 2*cost, so similar pairs score
    positive and dissimilar negative. Returns (score, distance) with
    distance = 1 - score / min(|a|, |b|), clamped to [0, 1]."""
    cost, default_gap = _cost_matrix(a, b)
    gap = default_gap if gap is None else gap
    if gap <= 0:
        raise ValueError("gap must be positive")
    sigma = 1.0 - 2.0 * cost
    m, n = cost.shape
    table = np.zeros((m + 1, n + 1), dtype=np.float64)
    best = 0.0
    for i in range(1, m + 1):
        for j in range(1, n + 1):
            h = max(
                0.0,
                table[i - 1, j - 1] + sigma[i - 1, j - 1],
                table[i - 1, j] - gap,
                table[i, j - 1] - gap,
            )
            table[i, j] = h
            if h > best:
                best = h
    distance = float(np.clip(1.0 - best / min(m, n), 0.0, 1.0))
    return best, distance


def dtw(a, b, normalize: bool = True) -> float:
    """Dynamic time warping with steps (1,0), (0,1), (1,1); the local cost
    is the cosine distance for feature sequences and 0/1 for symbols.
    Normalization divides by the optimal path's cell count (among
    minimum-cost paths the shortest one, which makes the result unique)."""
    cost, _ = _cost_matrix(a, b)
    m, n = cost.shape
    acc = np.full((m, n), np.inf)
    cells = np.zeros((m, n), dtype=np.int64)
    acc[0, 0] = cost[0, 0]
    cells[0, 0] = 1
    for i in range(m):
        for j in range(n):
            if i == 0 and j == 0:
                continue
            best = (np.inf, 0)
            if i > 0 and (acc[i - 1, j], cells[i - 1, j]) < best:
                best = (acc[i - 1, j], cells[i - 1, j])
            if j > 0 and (acc[i, j - 1], cells[i, j - 1]) < best:
                best = (acc[i, j - 1], cells[i, j - 1])
            if i > 0 and j > 0 and (acc[i - 1, j - 1], cells[i - 1, j - 1]) < best:
                best = (acc[i - 1, j - 1], cells[i - 1, j - 1])
            acc[i, j] = best[0] + cost[i, j]
            cells[i, j] = best[1] + 1
    total = float(acc[-1, -1])
    return total / cells[-1, -1] if normalize else total


def _pair_distance(a, b, method: str, gap: float | None) -> float:
    if method == "levenshtein":
        return levenshtein(a, b, gap=gap, normalize=True)
    if method == "smith_waterman":
        return smith_waterman(a, b, gap=gap)[1]
    if method == "dtw":
        return dtw(a, b, normalize=True)
    raise ValueError(f"unknown method {method!r}, expected one of {METHODS}")


def pairwise_matrix(seqs: list, method: str, gap: float | None = None) -> DistanceMatrix:
    """Symmetric matrix of normalized pairwise distances, zero diagonal."""
    if len(seqs) < 2:
        raise ValueError("need at least 2 sequences")
    kinds = {_as_sequence(s)[0] for s in seqs}
    if len(kinds) > 1:
        raise ValueError("mixed sequence kinds in matrix input")
    n = len(seqs)
    values = np.zeros((n, n), dtype=np.float64)
    for i in range(n):
        for j in range(i + 1, n):
            d = _pair_distance(seqs[i], seqs[j], method, gap)
            values[i, j] = d
            values[j, i] = d
    options = {"normalized": method != "smith_waterman"}
    if gap is not None:
        options["gap"] = gap
    return DistanceMatrix(n=n, values=values, method=method, options=options)


def pearson(m1: DistanceMatrix, m2: DistanceMatrix) -> float:
    """Pearson correlation of the strict upper triangles of two matrices.

    The diagonal is identically zero and would inflate the coefficient, so
    it is excluded."""
    if m1.n != m2.n:
        raise ValueError("matrix sizes differ")
    if m1.n < 3:
        raise ValueError("need n >= 3 for a meaningful correlation")
    iu = np.triu_indices(m1.n, k=1)
    x = m1.values[iu]
    y = m2.values[iu]
    sx = x - x.mean()
    sy = y - y.mean()
    denom = np.sqrt((sx**2).sum() * (sy**2).sum())
    if denom == 0:
        raise ValueError("degenerate matrix: zero variance in upper triangle")
    return float(np.clip((sx * sy).sum() / denom, -1.0, 1.0))
