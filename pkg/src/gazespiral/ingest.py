"""Loading and synchronization of gaze logs and frame sources.

A recording couples a frame source (image directory or raw RGB24 stream)
with exactly one gaze sample per frame. Gaps in the gaze log are filled
with invalid samples so downstream code never has to special-case missing
rows; it only has to honor the ``valid`` flag.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CLAMP_TOLERANCE = 0.1


class IngestError(Exception):
    """Raised for malformed gaze logs, manifests, or frame sources."""


@dataclass
class GazeSample:
    timestamp_ms: int
    frame_index: int
    x_norm: float
    y_norm: float
    valid: bool


class FrameSource:
    """Base for frame providers. Frames are H x W x 3 uint8 RGB arrays."""

    kind = "abstract"

    def __init__(self, width_px: int, height_px: int, fps: float, frame_count: int):
        if width_px <= 0 or height_px <= 0:
            raise IngestError("frame dimensions must be positive")
        if fps <= 0:
            raise IngestError("fps must be positive")
        if frame_count < 1:
            raise IngestError("frame_count must be >= 1")
        self.width_px = width_px
        self.height_px = height_px
        self.fps = fps
        self.frame_count = frame_count

    def get_frame(self, index: int) -> np.ndarray:
        raise NotImplementedError


class ImageDirectorySource(FrameSource):
    """Frames stored as ``frame_%06d.png`` (or ``.jpg``) in one directory."""

    kind = "image-directory"

    def __init__(self, path, width_px, height_px, fps, frame_count):
        super().__init__(width_px, height_px, fps, frame_count)
        self.path = Path(path)
        files = sorted(
            p for p in self.path.iterdir() if p.suffix.lower() in (".png", ".jpg", ".jpeg")
        )
        if len(files) < frame_count:
            raise IngestError(
                f"{self.path}: found {len(files)} frame images, manifest expects {frame_count}"
            )
        self._files = files[:frame_count]

    def get_frame(self, index: int) -> np.ndarray:
        from PIL import Image

        if not 0 <= index < self.frame_count:
            raise IndexError(f"frame index {index} out of range")
        with Image.open(self._files[index]) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
        if arr.shape != (self.height_px, self.width_px, 3):
            raise IngestError(
                f"{self._files[index]}: decoded to {arr.shape[1]}x{arr.shape[0]}, "
                f"expected {self.width_px}x{self.height_px}"
            )
        return arr


class RawStreamSource(FrameSource):
    """Headerless RGB24 frame stream, frame-major. Dimensions come from the manifest."""

    kind = "raw-frame-stream"

    def __init__(self, path, width_px, height_px, fps, frame_count):
        super().__init__(width_px, height_px, fps, frame_count)
        self.path = Path(path)
        self._frame_bytes = width_px * height_px * 3
        size = self.path.stat().st_size
        if size < frame_count * self._frame_bytes:
            raise IngestError(
                f"{self.path}: {size} bytes is too small for {frame_count} "
                f"{width_px}x{height_px} RGB frames"
            )

    def get_frame(self, index: int) -> np.ndarray:
        if not 0 <= index < self.frame_count:
            raise IndexError(f"frame index {index} out of range")
        with open(self.path, "rb") as f:
            f.seek(index * self._frame_bytes)
            buf = f.read(self._frame_bytes)
        return np.frombuffer(buf, dtype=np.uint8).reshape(self.height_px, self.width_px, 3)


class ArraySource(FrameSource):
    """In-memory frames, used for synthetic recordings and tests."""

    kind = "array"

    def __init__(self, frames: np.ndarray, fps: float):
        frames = np.ascontiguousarray(frames, dtype=np.uint8)
        if frames.ndim != 4 or frames.shape[3] != 3:
            raise IngestError("expected frames of shape (n, height, width, 3)")
        super().__init__(frames.shape[2], frames.shape[1], fps, frames.shape[0])
        self._frames = frames

    def get_frame(self, index: int) -> np.ndarray:
        return self._frames[index]


@dataclass
class Recording:
    id: str
    frames: FrameSource
    gaze: list[GazeSample] = field(default_factory=list)

    @property
    def frame_count(self) -> int:
        return self.frames.frame_count

    @property
    def fps(self) -> float:
        return self.frames.fps


@dataclass
class DataQualityReport:
    total_samples: int
    invalid_samples: int
    loss_fraction: float
    longest_invalid_run_frames: int
    invalid_runs: list[tuple[int, int]]

    def to_dict(self) -> dict:
        return {
            "total_samples": self.total_samples,
            "invalid_samples": self.invalid_samples,
            "loss_fraction": self.loss_fraction,
            "longest_invalid_run_frames": self.longest_invalid_run_frames,
            "invalid_runs": [list(run) for run in self.invalid_runs],
        }


def _parse_float(text: str, path, line_no: int, column: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise IngestError(f"{path}:{line_no}: non-numeric {column} {text!r}") from None


def _clamp_coord(value: float, path, line_no: int, column: str) -> float:
    # Small calibration overshoot is tolerated and clamped; gross errors are rejected.
    if value < -CLAMP_TOLERANCE or value > 1.0 + CLAMP_TOLERANCE:
        raise IngestError(f"{path}:{line_no}: {column}={value} outside [0,1] beyond tolerance")
    return min(max(value, 0.0), 1.0)


def load_gaze_csv(
    path,
    frame_count: int,
    gaze_space: str = "norm",
    frame_width: int | None = None,
    frame_height: int | None = None,
) -> list[GazeSample]:
    """Parse a gaze CSV and synchronize it to exactly one sample per frame.

    The file must carry the header ``frame_index,timestamp_ms,x_norm,y_norm,valid``.
    Frames without any row become invalid samples; frames with several rows are
    reduced to the mean of their valid rows (trackers commonly sample faster
    than video). With ``gaze_space="pixels"`` coordinates are divided by the
    frame dimensions before validation.
    """
    path = Path(path)
    if gaze_space not in ("norm", "pixels"):
        raise IngestError(f"unknown gaze_space {gaze_space!r}")
    if gaze_space == "pixels" and not (frame_width and frame_height):
        raise IngestError("gaze_space='pixels' requires frame_width and frame_height")
    if frame_count < 1:
        raise IngestError("frame_count must be >= 1")

    per_frame: dict[int, list[tuple[int, float, float, bool]]] = {}
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [c.strip() for c in header] != [
            "frame_index",
            "timestamp_ms",
            "x_norm",
            "y_norm",
            "valid",
        ]:
            raise IngestError(f"{path}:1: bad or missing header")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise IngestError(f"{path}:{line_no}: expected 5 columns, got {len(row)}")
            try:
                frame_index = int(row[0])
                timestamp_ms = int(float(row[1]))
            except ValueError:
                raise IngestError(f"{path}:{line_no}: non-numeric frame_index/timestamp") from None
            if frame_index < 0:
                raise IngestError(f"{path}:{line_no}: negative frame_index")
            x = _parse_float(row[2], path, line_no, "x_norm")
            y = _parse_float(row[3], path, line_no, "y_norm")
            if row[4].strip() not in ("0", "1"):
                raise IngestError(f"{path}:{line_no}: valid must be 0 or 1, got {row[4]!r}")
            valid = row[4].strip() == "1"
            if valid:
                if gaze_space == "pixels":
                    x /= frame_width
                    y /= frame_height
                x = _clamp_coord(x, path, line_no, "x_norm")
                y = _clamp_coord(y, path, line_no, "y_norm")
            if frame_index < frame_count:
                per_frame.setdefault(frame_index, []).append((timestamp_ms, x, y, valid))

    samples: list[GazeSample] = []
    last_ts = 0
    first_ts = min((rows[0][0] for rows in per_frame.values()), default=0)
    for i in range(frame_count):
        rows = per_frame.get(i, [])
        valid_rows = [r for r in rows if r[3]]
        if valid_rows:
            ts = int(round(float(np.mean([r[0] for r in valid_rows]))))
            x = float(np.mean([r[1] for r in valid_rows]))
            y = float(np.mean([r[2] for r in valid_rows]))
            sample = GazeSample(ts, i, x, y, True)
        elif rows:
            ts = int(round(float(np.mean([r[0] for r in rows]))))
            sample = GazeSample(ts, i, 0.0, 0.0, False)
        else:
            # No row at all: carry the previous timestamp so the sequence
            # stays non-decreasing (the value is ignored downstream anyway).
            sample = GazeSample(last_ts if samples else first_ts, i, 0.0, 0.0, False)
        sample.timestamp_ms = max(sample.timestamp_ms, last_ts)
        last_ts = sample.timestamp_ms
        samples.append(sample)
    return samples


def data_quality(rec: Recording) -> DataQualityReport:
    """Summarize data loss: per-recording fraction and invalid-run layout."""
    if not rec.gaze:
        raise IngestError("empty recording")
    total = len(rec.gaze)
    runs: list[tuple[int, int]] = []
    run_start = None
    for sample in rec.gaze:
        if not sample.valid:
            if run_start is None:
                run_start = sample.frame_index
        elif run_start is not None:
            runs.append((run_start, sample.frame_index - 1))
            run_start = None
    if run_start is not None:
        runs.append((run_start, rec.gaze[-1].frame_index))
    invalid = sum(end - start + 1 for start, end in runs)
    return DataQualityReport(
        total_samples=total,
        invalid_samples=invalid,
        loss_fraction=invalid / total,
        longest_invalid_run_frames=max((end - start + 1 for start, end in runs), default=0),
        invalid_runs=runs,
    )


def load_recording(manifest_path, gaze_space: str = "norm") -> Recording:
    """Load a recording manifest and synchronize its gaze log.

    Manifest schema: ``{id, frames:{kind,path,width,height,fps,frame_count}, gaze_csv}``.
    Relative paths are resolved against the manifest's directory.
    """
    manifest_path = Path(manifest_path)
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise IngestError(f"manifest not found: {manifest_path}") from None
    except json.JSONDecodeError as exc:
        raise IngestError(f"{manifest_path}: invalid JSON ({exc})") from None

    try:
        rec_id = manifest["id"]
        frames_spec = manifest["frames"]
        kind = frames_spec["kind"]
        frames_path = manifest_path.parent / frames_spec["path"]
        width = int(frames_spec["width"])
        height = int(frames_spec["height"])
        fps = float(frames_spec["fps"])
        frame_count = int(frames_spec["frame_count"])
        gaze_csv = manifest_path.parent / manifest["gaze_csv"]
    except (KeyError, TypeError, ValueError) as exc:
        raise IngestError(f"{manifest_path}: bad manifest field ({exc})") from None

    if kind == "image-directory":
        source = ImageDirectorySource(frames_path, width, height, fps, frame_count)
    elif kind == "raw-frame-stream":
        source = RawStreamSource(frames_path, width, height, fps, frame_count)
    else:
        raise IngestError(f"{manifest_path}: unknown frame source kind {kind!r}")

    try:
        gaze = load_gaze_csv(
            gaze_csv, frame_count, gaze_space=gaze_space, frame_width=width, frame_height=height
        )
    except FileNotFoundError:
        raise IngestError(f"gaze csv not found: {gaze_csv}") from None
    return Recording(id=rec_id, frames=source, gaze=gaze)
