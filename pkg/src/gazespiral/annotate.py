"""Span labels on fixation sequences, AOI symbol mapping, scarf export.

Annotations address fixation indices. Overlapping labels are allowed;
where several labels cover one fixation the most recently created
annotation wins, matching an interactive workflow where later passes
refine earlier ones.
"""
from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fixation import Fixation
from .metrics import SymbolSequence

BACKGROUND_LABEL = "__background__"
BACKGROUND_COLOR = (220, 220, 220)

Color = tuple[int, int, int]


@dataclass
class Annotation:
    recording_id: str
    start_fixation: int
    end_fixation: int
    label: str
    color: Color = (255, 215, 0)
    author: str = ""
    created_at: float = 0.0
    id: int = 0

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "start_fixation": self.start_fixation,
            "end_fixation": self.end_fixation,
            "label": self.label,
            "color": list(self.color),
            "author": self.author,
            "created_at": self.created_at,
        }

    @classmethod
    def from_dict(cls, recording_id: str, doc: dict) -> "Annotation":
        return cls(
            recording_id=recording_id,
            start_fixation=doc["start_fixation"],
            end_fixation=doc["end_fixation"],
            label=doc["label"],
            color=tuple(doc.get("color", (255, 215, 0))),
            author=doc.get("author", ""),
            created_at=doc.get("created_at", 0.0),
            id=doc.get("id", 0),
        )


@dataclass
class LabelScheme:
    labels: list[tuple[str, Color]]
    background: tuple[str, Color] = (BACKGROUND_LABEL, BACKGROUND_COLOR)

    def __post_init__(self):
        names = [name for name, _ in self.labels] + [self.background[0]]
        if len(set(names)) != len(names):
            raise ValueError("labels must be unique")

    def symbol_of(self, label: str) -> int:
        """Background maps to 0, scheme labels to 1..len in order."""
        if label == self.background[0]:
            return 0
        for i, (name, _) in enumerate(self.labels):
            if name == label:
                return i + 1
        raise KeyError(f"label {label!r} missing from scheme")

    def color_of(self, label: str) -> Color:
        if label == self.background[0]:
            return self.background[1]
        for name, color in self.labels:
            if name == label:
                return color
        raise KeyError(f"label {label!r} missing from scheme")

    def to_dict(self) -> dict:
        return {
            "labels": [{"label": name, "color": list(color)} for name, color in self.labels],
            "background": {"label": self.background[0], "color": list(self.background[1])},
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "LabelScheme":
        return cls(
            labels=[(item["label"], tuple(item["color"])) for item in doc["labels"]],
            background=(doc["background"]["label"], tuple(doc["background"]["color"])),
        )


class AnnotationStore:
    """Per-recording annotation collections with JSON persistence."""

    def __init__(self):
        self._annotations: dict[str, list[Annotation]] = {}
        self._fixation_counts: dict[str, int] = {}
        self._next_id = 1

    def register(self, recording_id: str, fixation_count: int) -> None:
        self._annotations.setdefault(recording_id, [])
        self._fixation_counts[recording_id] = fixation_count

    def recordings(self) -> list[str]:
        return sorted(self._annotations)

    def get(self, recording_id: str) -> list[Annotation]:
        if recording_id not in self._annotations:
            raise KeyError(f"unknown recording {recording_id!r}")
        return list(self._annotations[recording_id])

    def add(self, annotation: Annotation) -> int:
        rid = annotation.recording_id
        if rid not in self._annotations:
            raise KeyError(f"unknown recording {rid!r}")
        count = self._fixation_counts.get(rid, 0)
        if not (0 <= annotation.start_fixation <= annotation.end_fixation < count):
            raise ValueError(
                f"invalid span ({annotation.start_fixation}, {annotation.end_fixation}) "
                f"for {count} fixations"
            )
        if not annotation.label:
            raise ValueError("label must be non-empty")
        annotation.id = self._next_id
        self._next_id += 1
        if annotation.created_at == 0.0:
            annotation.created_at = time.time()
        self._annotations[rid].append(annotation)
        return annotation.id

    def remove(self, recording_id: str, annotation_id: int) -> bool:
        anns = self._annotations.get(recording_id, [])
        for i, ann in enumerate(anns):
            if ann.id == annotation_id:
                del anns[i]
                return True
        return False

    def save(self, recording_id: str, path) -> None:
        """Write-then-rename so readers never see a torn file."""
        doc = {
            "version": 1,
            "recording_id": recording_id,
            "annotations": [a.to_dict() for a in self.get(recording_id)],
        }
        path = Path(path)
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_text(json.dumps(doc, indent=2), encoding="utf-8")
        os.replace(tmp, path)

    def load(self, path) -> str:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        if doc.get("version") != 1:
            raise ValueError(f"{path}: unsupported annotation file version")
        rid = doc["recording_id"]
        anns = [Annotation.from_dict(rid, item) for item in doc["annotations"]]
        self._annotations[rid] = anns
        self._fixation_counts.setdefault(
            rid, max((a.end_fixation + 1 for a in anns), default=0)
        )
        if anns:
            self._next_id = max(self._next_id, max(a.id for a in anns) + 1)
        return rid


def add_annotation(store: AnnotationStore, annotation: Annotation) -> int:
    return store.add(annotation)


def _winning_labels(annotations: list[Annotation], fixation_count: int, background: str) -> list[str]:
    labels = [background] * fixation_count
    # Later creations override earlier ones; ids grow monotonically and
    # break created_at ties.
    for ann in sorted(annotations, key=lambda a: (a.created_at, a.id)):
        for i in range(ann.start_fixation, min(ann.end_fixation + 1, fixation_count)):
            labels[i] = ann.label
    return labels


def to_symbol_sequence(
    fixations: list[Fixation],
    store: AnnotationStore,
    scheme: LabelScheme,
    recording_id: str,
) -> SymbolSequence:
    """One symbol per fixation; unannotated fixations get the background
    symbol. Raises KeyError when an annotation label is not in the scheme."""
    labels = _winning_labels(store.get(recording_id), len(fixations), scheme.background[0])
    return SymbolSequence(items=[scheme.symbol_of(label) for label in labels], recording_id=recording_id)


def export_scarf(
    fixations: list[Fixation],
    store: AnnotationStore,
    scheme: LabelScheme,
    recording_id: str,
    frame_count: int,
    width_px: int | None = None,
    height_px: int = 24,
) -> np.ndarray:
    """Horizontal strip, one color per frame from the covering fixation's
    label (background color where no fixation covers the frame)."""
    width_px = frame_count if width_px is None else width_px
    labels = _winning_labels(store.get(recording_id), len(fixations), scheme.background[0])
    frame_colors = np.empty((frame_count, 3), dtype=np.uint8)
    frame_colors[:] = scheme.background[1]
    for fixation, label in zip(fixations, labels):
        color = scheme.color_of(label)
        start = max(fixation.start_frame, 0)
        end = min(fixation.end_frame, frame_count - 1)
        frame_colors[start : end + 1] = color
    columns = (np.arange(width_px, dtype=np.int64) * frame_count) // width_px
    strip = frame_colors[columns]
    return np.broadcast_to(strip[None, :, :], (height_px, width_px, 3)).copy()


def save_label_scheme(scheme: LabelScheme, path) -> None:
    Path(path).write_text(json.dumps(scheme.to_dict(), indent=2), encoding="utf-8")


def load_label_scheme(path) -> LabelScheme:
    return LabelScheme.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
