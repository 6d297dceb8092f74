"""Scanline extraction and linear slitscan rendering.

One vertical scanline is pulled from every sampled frame, either at the
frame center (egocentric approximation), at the gaze x-position over the
full frame height, or as a short window around the point of regard.
Frames with missing gaze yield black scanlines in the gaze-driven modes.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ingest import GazeSample, Recording

STATIC_CENTER = "static-center"
GAZE_GLOBAL = "gaze-global"
GAZE_LOCAL = "gaze-local"

DEFAULT_HEIGHT = 100
DEFAULT_LOCAL_HALF_HEIGHT = 50

_MODE_TAGS = {STATIC_CENTER: 0, GAZE_GLOBAL: 1, GAZE_LOCAL: 2}
_TAG_MODES = {v: k for k, v in _MODE_TAGS.items()}


@dataclass(frozen=True)
class SlitscanMode:
    kind: str
    half_height_px: int = 0

    def __post_init__(self):
        if self.kind not in _MODE_TAGS:
            raise ValueError(f"unknown slitscan mode {self.kind!r}")
        if self.kind == GAZE_LOCAL and self.half_height_px <= 0:
            raise ValueError("gaze-local mode needs half_height_px > 0")

    @classmethod
    def static_center(cls) -> "SlitscanMode":
        return cls(STATIC_CENTER)

    @classmethod
    def gaze_global(cls) -> "SlitscanMode":
        return cls(GAZE_GLOBAL)

    @classmethod
    def gaze_local(cls, half_height_px: int = DEFAULT_LOCAL_HALF_HEIGHT) -> "SlitscanMode":
        return cls(GAZE_LOCAL, half_height_px)

    @property
    def uses_gaze(self) -> bool:
        return self.kind != STATIC_CENTER


@dataclass
class Scanline:
    pixels: np.ndarray  # (H, 3) uint8
    gaze_marker_row: int | None = None
    is_missing: bool = False


@dataclass
class SlitscanSequence:
    scanlines: list[Scanline]
    height: int
    mode: SlitscanMode
    stride: int
    recording_id: str = ""
    frame_indices: list[int] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.scanlines)

    def pixel_array(self) -> np.ndarray:
        """All scanlines stacked as (count, H, 3) uint8."""
        return np.stack([s.pixels for s in self.scanlines])

    def missing_mask(self) -> np.ndarray:
        return np.array([s.is_missing for s in self.scanlines], dtype=bool)

    def marker_rows(self) -> np.ndarray:
        """Marker rows as int32, -1 where absent."""
        return np.array(
            [-1 if s.gaze_marker_row is None else s.gaze_marker_row for s in self.scanlines],
            dtype=np.int32,
        )


def _resample_column(column: np.ndarray, height: int) -> np.ndarray:
    """Resample a (L, 3) column to the target height. Identity when lengths
    match, linear interpolation otherwise."""
    src = column.shape[0]
    if src == height:
        return column.astype(np.uint8, copy=True)
    positions = np.linspace(0.0, src - 1, height)
    xp = np.arange(src, dtype=np.float64)
    out = np.empty((height, 3), dtype=np.uint8)
    for c in range(3):
        out[:, c] = np.rint(np.interp(positions, xp, column[:, c].astype(np.float64))).astype(np.uint8)
    return out


def extract_scanline(frame: np.ndarray, sample: GazeSample, mode: SlitscanMode, height: int) -> Scanline:
    """Extract one vertical scanline from a frame according to the mode."""
    if height <= 0:
        raise ValueError("scanline height must be positive")
    frame_h, frame_w = frame.shape[:2]
    if mode.kind in (STATIC_CENTER, GAZE_GLOBAL) and height > frame_h:
        raise ValueError(f"height {height} exceeds frame height {frame_h}")

    if mode.kind == STATIC_CENTER:
        column = frame[:, frame_w // 2, :]
        return Scanline(pixels=_resample_column(column, height))

    if not sample.valid:
        return Scanline(pixels=np.zeros((height, 3), dtype=np.uint8), is_missing=True)

    x = int(np.rint(sample.x_norm * (frame_w - 1)))
    if mode.kind == GAZE_GLOBAL:
        column = frame[:, x, :]
        marker = int(np.rint(sample.y_norm * (height - 1)))
        return Scanline(pixels=_resample_column(column, height), gaze_marker_row=marker)

    # gaze-local: a 2*h+1 window around the gaze y, shifted inside the frame
    # near borders instead of padding with black.
    gy = int(np.rint(sample.y_norm * (frame_h - 1)))
    span = 2 * mode.half_height_px + 1
    if span >= frame_h:
        column = frame[:, x, :]
    else:
        top = min(max(gy - mode.half_height_px, 0), frame_h - span)
        column = frame[top : top + span, x, :]
    return Scanline(pixels=_resample_column(column, height))


def extract_sequence(
    rec: Recording,
    mode: SlitscanMode,
    height: int = DEFAULT_HEIGHT,
    stride: int = 1,
) -> SlitscanSequence:
    """Extract scanlines for frames 0, stride, 2*stride, ..."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    indices = list(range(0, rec.frame_count, stride))
    scanlines = []
    for i in indices:
        frame = rec.frames.get_frame(i)
        scanlines.append(extract_scanline(frame, rec.gaze[i], mode, height))
    return SlitscanSequence(
        scanlines=scanlines,
        height=height,
        mode=mode,
        stride=stride,
        recording_id=rec.id,
        frame_indices=indices,
    )


def _draw_marker(image: np.ndarray, row: int, col: int) -> None:
    """White dot with red border, clipped at image edges."""
    h, w = image.shape[:2]
    for dy in range(-2, 3):
        for dx in range(-2, 3):
            if dx * dx + dy * dy > 6:
                continue
            y, x = row + dy, col + dx
            if 0 <= y < h and 0 <= x < w:
                image[y, x] = (255, 0, 0)
    for dy, dx in ((0, 0), (-1, 0), (1, 0), (0, -1), (0, 1)):
        y, x = row + dy, col + dx
        if 0 <= y < h and 0 <= x < w:
            image[y, x] = (255, 255, 255)


def render_linear(seq: SlitscanSequence, max_width_px: int | None = None) -> np.ndarray:
    """Render the sequence as a height x count RGB image, one column per
    scanline, oldest on the left. When wider than max_width_px, columns are
    box-filtered down to that width."""
    if len(seq) == 0:
        raise ValueError("empty sequence")
    image = np.ascontiguousarray(seq.pixel_array().transpose(1, 0, 2))
    for i, scanline in enumerate(seq.scanlines):
        if scanline.gaze_marker_row is not None:
            _draw_marker(image, scanline.gaze_marker_row, i)
    count = image.shape[1]
    if max_width_px is not None and count > max_width_px:
        bounds = (np.arange(max_width_px + 1) * count) // max_width_px
        squeezed = np.empty((seq.height, max_width_px, 3), dtype=np.uint8)
        as_float = image.astype(np.float64)
        for j in range(max_width_px):
            squeezed[:, j, :] = np.rint(as_float[:, bounds[j] : bounds[j + 1], :].mean(axis=1))
        image = squeezed
    return image


# Binary sequence cache. Layout (little-endian):
#   magic "GZSL" | u16 version=1 | u8 mode tag (0 static, 1 global, 2 local)
#   | i32 half_height | i32 height | i64 count | i32 stride
#   | u16 id length | id bytes (utf-8)
# then per scanline:
#   u8 flags (bit 0 = missing) | i32 marker row (-1 = none) | height*3 RGB bytes

_CACHE_MAGIC = b"GZSL"
_HEADER = struct.Struct("<4sHBiiqiH")


def save_sequence_cache(seq: SlitscanSequence, path) -> None:
    rec_id = seq.recording_id.encode("utf-8")
    with open(path, "wb") as f:
        f.write(
            _HEADER.pack(
                _CACHE_MAGIC,
                1,
                _MODE_TAGS[seq.mode.kind],
                seq.mode.half_height_px,
                seq.height,
                len(seq),
                seq.stride,
                len(rec_id),
            )
        )
        f.write(rec_id)
        for s in seq.scanlines:
            marker = -1 if s.gaze_marker_row is None else s.gaze_marker_row
            f.write(struct.pack("<Bi", 1 if s.is_missing else 0, marker))
            f.write(s.pixels.tobytes())


def load_sequence_cache(path) -> SlitscanSequence:
    data = Path(path).read_bytes()
    magic, version, tag, half_height, height, count, stride, id_len = _HEADER.unpack_from(data, 0)
    if magic != _CACHE_MAGIC or version != 1:
        raise ValueError(f"{path}: not a slitscan cache")
    offset = _HEADER.size
    rec_id = data[offset : offset + id_len].decode("utf-8")
    offset += id_len
    kind = _TAG_MODES[tag]
    mode = SlitscanMode(kind, half_height) if kind == GAZE_LOCAL else SlitscanMode(kind)
    scanlines = []
    record = struct.Struct("<Bi")
    for _ in range(count):
        flags, marker = record.unpack_from(data, offset)
        offset += record.size
        pixels = np.frombuffer(data[offset : offset + height * 3], dtype=np.uint8).reshape(height, 3)
        offset += height * 3
        scanlines.append(
            Scanline(
                pixels=pixels.copy(),
                gaze_marker_row=None if marker < 0 else marker,
                is_missing=bool(flags & 1),
            )
        )
    return SlitscanSequence(scanlines=scanlines, height=height, mode=mode, stride=stride, recording_id=rec_id)
