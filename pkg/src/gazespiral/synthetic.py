"""Synthetic recordings for tests and demos.

Two generators: a procedural recording with a fully deterministic frame
pattern and gaze path (used for golden-image tests), and an art-gallery
scene with six solid-color "paintings" viewed left-to-right or
right-to-left, which mirrors the kind of study the toolkit targets.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .ingest import ArraySource, GazeSample, Recording

GALLERY_FPS = 25.0
GALLERY_SIZE = (160, 120)  # width, height

# Six colors in distinct 4x4x4 histogram bins, plus a neutral backdrop.
PAINTING_COLORS = [
    (224, 48, 48),
    (48, 224, 48),
    (48, 48, 224),
    (224, 224, 48),
    (224, 48, 224),
    (48, 224, 224),
]
BACKDROP_COLOR = (128, 128, 128)


def _gaze_list(entries: list[tuple[float, float, bool]], fps: float) -> list[GazeSample]:
    frame_ms = 1000.0 / fps
    return [
        GazeSample(int(round(i * frame_ms)), i, x, y, valid)
        for i, (x, y, valid) in enumerate(entries)
    ]


def make_recording(rec_id: str, frames: np.ndarray, gaze_entries: list[tuple[float, float, bool]],
                   fps: float) -> Recording:
    """In-memory recording from raw frames and (x, y, valid) gaze entries."""
    if len(gaze_entries) != frames.shape[0]:
        raise ValueError("one gaze entry per frame required")
    return Recording(id=rec_id, frames=ArraySource(frames, fps), gaze=_gaze_list(gaze_entries, fps))


def procedural_recording(rec_id: str = "procedural", n_frames: int = 100,
                         width: int = 160, height: int = 120, fps: float = 25.0) -> Recording:
    """Deterministic recording: a color gradient with a moving bright bar,
    three gaze dwells, and one planted run of missing samples."""
    xs = np.linspace(0, 255, width)
    ys = np.linspace(0, 255, height)
    base = np.zeros((height, width, 3), dtype=np.float64)
    base[:, :, 0] = xs[None, :]
    base[:, :, 1] = ys[:, None]

    frames = np.empty((n_frames, height, width, 3), dtype=np.uint8)
    for f in range(n_frames):
        frame = base.copy()
        frame[:, :, 2] = 255.0 * f / max(n_frames - 1, 1)
        bar = (f * 3) % width
        frame[:, bar, :] = 255.0
        frames[f] = np.rint(frame)

    entries: list[tuple[float, float, bool]] = []
    for f in range(n_frames):
        if 50 <= f <= 57:
            entries.append((0.0, 0.0, False))
        elif f < 30:
            entries.append((0.25, 0.3, True))
        elif f < 35:
            alpha = (f - 29) / 6.0
            entries.append((0.25 + alpha * 0.45, 0.3 + alpha * 0.3, True))
        elif f < 70:
            entries.append((0.7, 0.6, True))
        else:
            entries.append((0.4, 0.8, True))
    return make_recording(rec_id, frames, entries, fps)


def gallery_recording(
    rec_id: str,
    order: str,
    seed: int,
    width: int = GALLERY_SIZE[0],
    height: int = GALLERY_SIZE[1],
    fps: float = GALLERY_FPS,
    invalid_runs: list[tuple[int, int]] | None = None,
) -> tuple[Recording, np.ndarray]:
    """One walkthrough of the six-painting gallery.

    order "R" visits paintings 0..5, "L" visits 5..0. Returns the recording
    and a per-frame AOI array (painting index, -1 for backdrop). Dwell
    lengths and within-painting gaze shifts are jittered by the seed.
    """
    if order not in ("L", "R"):
        raise ValueError("order must be 'L' or 'R'")
    rng = np.random.default_rng(seed)
    sequence = list(range(6)) if order == "R" else list(range(5, -1, -1))

    frame_colors: list[tuple[int, int, int]] = []
    frame_aoi: list[int] = []
    entries: list[tuple[float, float, bool]] = []
    gaze_spots = [(0.3, 0.35), (0.68, 0.42), (0.45, 0.7)]
    for painting in sequence:
        n_spots = int(rng.integers(2, 4))
        spots = rng.permutation(len(gaze_spots))[:n_spots]
        for spot in spots:
            dwell = int(rng.integers(10, 18))
            gx, gy = gaze_spots[spot]
            gx += float(rng.uniform(-0.02, 0.02))
            gy += float(rng.uniform(-0.02, 0.02))
            for _ in range(dwell):
                frame_colors.append(PAINTING_COLORS[painting])
                frame_aoi.append(painting)
                entries.append((gx, gy, True))
        for step in range(2):  # short walk to the next painting
            frame_colors.append(BACKDROP_COLOR)
            frame_aoi.append(-1)
            entries.append((0.1 + 0.8 * step, 0.5, True))

    n_frames = len(frame_colors)
    if invalid_runs:
        for start, end in invalid_runs:
            for f in range(start, min(end + 1, n_frames)):
                entries[f] = (0.0, 0.0, False)

    frames = np.empty((n_frames, height, width, 3), dtype=np.uint8)
    for f, color in enumerate(frame_colors):
        frames[f] = color
    return make_recording(rec_id, frames, entries, fps), np.array(frame_aoi)


def write_recording(rec: Recording, out_dir, kind: str = "image-directory") -> Path:
    """Persist a recording to disk (frames + gaze CSV + manifest) so it can
    be consumed through the CLI. Returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    source = rec.frames

    if kind == "image-directory":
        from PIL import Image

        frames_dir = out_dir / "frames"
        frames_dir.mkdir(exist_ok=True)
        for i in range(source.frame_count):
            Image.fromarray(source.get_frame(i)).save(frames_dir / f"frame_{i:06d}.png")
        frames_path = "frames"
    elif kind == "raw-frame-stream":
        frames_path = "frames.rgb"
        with open(out_dir / frames_path, "wb") as f:
            for i in range(source.frame_count):
                f.write(source.get_frame(i).tobytes())
    else:
        raise ValueError(f"unknown kind {kind!r}")

    csv_lines = ["frame_index,timestamp_ms,x_norm,y_norm,valid"]
    for s in rec.gaze:
        csv_lines.append(
            f"{s.frame_index},{s.timestamp_ms},{s.x_norm:.6f},{s.y_norm:.6f},{1 if s.valid else 0}"
        )
    (out_dir / "gaze.csv").write_text("\n".join(csv_lines) + "\n", encoding="utf-8")

    manifest = {
        "id": rec.id,
        "frames": {
            "kind": kind,
            "path": frames_path,
            "width": source.width_px,
            "height": source.height_px,
            "fps": source.fps,
            "frame_count": source.frame_count,
        },
        "gaze_csv": "gaze.csv",
    }
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    return manifest_path
