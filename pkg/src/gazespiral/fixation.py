"""Dispersion-threshold fixation detection and per-fixation image features.

Fixations are maximal spans of valid samples whose spatial dispersion
(max(x)-min(x)) + (max(y)-min(y)) stays below a threshold for at least a
minimum duration. Each fixation carries a 72-dimensional appearance
descriptor (64 RGB histogram bins + 8 gradient-orientation bins) computed
from a patch around the gaze point in the span's middle frame. The
extractor is swappable so a learned embedding can be plugged in instead.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .ingest import Recording

FEATURE_DIM = 72
COLOR_BINS = 64  # 4 x 4 x 4 RGB
GRADIENT_BINS = 8  # 45 degree sectors
DEFAULT_DISPERSION = 0.05
DEFAULT_MIN_DURATION_MS = 100.0
DEFAULT_PATCH_PX = 64

FeatureExtractor = Callable[[np.ndarray, tuple[float, float], int], np.ndarray]


@dataclass
class Fixation:
    start_frame: int
    end_frame: int
    centroid_x: float
    centroid_y: float
    duration_ms: float
    feature: np.ndarray | None = None

    @property
    def middle_frame(self) -> int:
        return (self.start_frame + self.end_frame) // 2

    def to_dict(self) -> dict:
        return {
            "start_frame": self.start_frame,
            "end_frame": self.end_frame,
            "centroid": [self.centroid_x, self.centroid_y],
            "duration_ms": self.duration_ms,
            "feature": [] if self.feature is None else [float(v) for v in self.feature],
        }


@dataclass
class Thumbnail:
    pixels: np.ndarray
    source_frame: int
    fixation_index: int


def _clamped_patch(frame: np.ndarray, centroid: tuple[float, float], patch_px: int) -> np.ndarray:
    """Crop a patch_px square centered at the normalized centroid, shifted
    inside the frame when the centroid sits near a border."""
    height, width = frame.shape[:2]
    cx = int(np.rint(centroid[0] * (width - 1)))
    cy = int(np.rint(centroid[1] * (height - 1)))
    side_w = min(patch_px, width)
    side_h = min(patch_px, height)
    left = min(max(cx - patch_px // 2, 0), width - side_w)
    top = min(max(cy - patch_px // 2, 0), height - side_h)
    return frame[top : top + side_h, left : left + side_w]


def extract_feature(frame: np.ndarray, centroid: tuple[float, float], patch_px: int = DEFAULT_PATCH_PX) -> np.ndarray:
    """Compute the 72-dim appearance descriptor of the patch at the centroid.

    First 64 entries: L1-normalized 4x4x4 RGB histogram. Last 8 entries:
    magnitude-weighted gradient-orientation histogram over 45 degree bins
    (central differences on luminance), L1-normalized, or all zero for
    gradient-free patches.
    """
    if patch_px < 8 or patch_px % 2 != 0:
        raise ValueError("patch_px must be even and >= 8")
    patch = _clamped_patch(frame, centroid, patch_px)

    bins = (patch.astype(np.int32) // 64).reshape(-1, 3)
    flat = bins[:, 0] * 16 + bins[:, 1] * 4 + bins[:, 2]
    color = np.bincount(flat, minlength=COLOR_BINS).astype(np.float64)
    color /= color.sum()

    luma = (
        0.299 * patch[:, :, 0].astype(np.float64)
        + 0.587 * patch[:, :, 1].astype(np.float64)
        + 0.114 * patch[:, :, 2].astype(np.float64)
    )
    gy, gx = np.gradient(luma)
    magnitude = np.hypot(gx, gy)
    gradient = np.zeros(GRADIENT_BINS, dtype=np.float64)
    total = magnitude.sum()
    if total > 0:
        angle = np.arctan2(gy, gx)  # [-pi, pi]
        idx = np.floor((angle + np.pi) / (2 * np.pi) * GRADIENT_BINS).astype(np.int64)
        idx = np.clip(idx, 0, GRADIENT_BINS - 1)
        np.add.at(gradient, idx.ravel(), magnitude.ravel())
        gradient /= gradient.sum()
    return np.concatenate([color, gradient])


def make_thumbnail(frame: np.ndarray, centroid: tuple[float, float], size_px: int = 64,
                   source_frame: int = 0, fixation_index: int = 0) -> Thumbnail:
    """Cut an edge-clamped size_px square around the centroid, no rescaling."""
    patch = _clamped_patch(frame, centroid, size_px)
    return Thumbnail(pixels=patch.copy(), source_frame=source_frame, fixation_index=fixation_index)


def _dispersion(xs: np.ndarray, ys: np.ndarray, start: int, end: int) -> float:
    sl = slice(start, end + 1)
    return (xs[sl].max() - xs[sl].min()) + (ys[sl].max() - ys[sl].min())


def _detect_in_run(xs, ys, offset, n_min, threshold):
    """Greedy I-DT over one contiguous run of valid samples."""
    spans = []
    n = len(xs)
    pointer = 0
    while pointer + n_min <= n:
        if _dispersion(xs, ys, pointer, pointer + n_min - 1) > threshold:
            pointer += 1
            continue
        end = pointer + n_min - 1
        while end + 1 < n and _dispersion(xs, ys, pointer, end + 1) <= threshold:
            end += 1
        spans.append((offset + pointer, offset + end))
        pointer = end + 1
    return spans


def detect_fixations(
    rec: Recording,
    dispersion_threshold: float = DEFAULT_DISPERSION,
    min_duration_ms: float = DEFAULT_MIN_DURATION_MS,
    patch_px: int = DEFAULT_PATCH_PX,
    feature_extractor: FeatureExtractor | None = extract_feature,
) -> list[Fixation]:
    """Detect fixations with I-DT and attach appearance features.

    Pass ``feature_extractor=None`` to skip feature computation (no frame
    access happens in that case).
    """
    if dispersion_threshold <= 0:
        raise ValueError("dispersion_threshold must be positive")
    if min_duration_ms <= 0:
        raise ValueError("min_duration_ms must be positive")
    if len(rec.gaze) != rec.frame_count:
        raise ValueError("recording is not synchronized (one sample per frame required)")

    fps = rec.fps
    n_min = max(1, math.ceil(min_duration_ms * fps / 1000.0))

    valid = np.array([s.valid for s in rec.gaze], dtype=bool)
    xs = np.array([s.x_norm for s in rec.gaze], dtype=np.float64)
    ys = np.array([s.y_norm for s in rec.gaze], dtype=np.float64)

    spans: list[tuple[int, int]] = []
    run_start = None
    for i in range(len(valid) + 1):
        if i < len(valid) and valid[i]:
            if run_start is None:
                run_start = i
        elif run_start is not None:
            spans.extend(
                _detect_in_run(xs[run_start:i], ys[run_start:i], run_start, n_min, dispersion_threshold)
            )
            run_start = None

    fixations = []
    for start, end in spans:
        fix = Fixation(
            start_frame=start,
            end_frame=end,
            centroid_x=float(xs[start : end + 1].mean()),
            centroid_y=float(ys[start : end + 1].mean()),
            duration_ms=(end - start + 1) * (1000.0 / fps),
        )
        if feature_extractor is not None:
            frame = rec.frames.get_frame(fix.middle_frame)
            fix.feature = feature_extractor(frame, (fix.centroid_x, fix.centroid_y), patch_px)
        fixations.append(fix)
    return fixations


def fixations_to_json(fixations: list[Fixation]) -> list[dict]:
    return [f.to_dict() for f in fixations]


def fixation_features(fixations: list[Fixation]) -> np.ndarray:
    """Stack fixation features into an (n, 72) array."""
    if not fixations:
        return np.zeros((0, FEATURE_DIM))
    return np.stack([f.feature for f in fixations])
