"""HTTP JSON service backing the interactive annotation UI.

All analysis state lives server-side: recordings, fixations, annotation
stores, and a render cache for spiral images. Clients are stateless; a
client token only scopes UI selections. JSON bodies mirror the module
export schemas.
"""
from __future__ import annotations

import hashlib
import io
import threading
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Header, HTTPException, Query, Response
from pydantic import BaseModel

from .annotate import Annotation, AnnotationStore, LabelScheme, export_scarf, load_label_scheme
from .fixation import detect_fixations, fixations_to_json, make_thumbnail
from .ingest import data_quality, load_recording
from .metrics import FeatureSequence
from .query import QuerySpan, find_similar_spans, results_to_json
from .slitscan import SlitscanMode, extract_sequence
from .spiral import (
    OverlaySpec,
    SpiralParams,
    build_geometry,
    frame_span_to_scanline_span,
    render_spiral,
)


class AnnotationIn(BaseModel):
    start_fixation: int
    end_fixation: int
    label: str
    color: list[int] | None = None
    author: str = ""


class LabelIn(BaseModel):
    label: str
    color: list[int]


class LabelSchemeIn(BaseModel):
    labels: list[LabelIn]
    background: LabelIn


class QueryIn(BaseModel):
    recording_id: str
    start_fixation: int
    end_fixation: int
    threshold: float = 0.8
    targets: list[str] | None = None


class SelectionIn(BaseModel):
    recording_id: str
    anchor_fixation: int
    extent: int = 1


def _png_bytes(image: np.ndarray) -> bytes:
    from PIL import Image

    buf = io.BytesIO()
    Image.fromarray(image).save(buf, format="PNG")
    return buf.getvalue()


def _png_response(data: bytes) -> Response:
    etag = hashlib.sha256(data).hexdigest()[:32]
    return Response(content=data, media_type="image/png", headers={"ETag": etag})


class Session:
    """Loaded project state shared by all request handlers."""

    def __init__(self, config: dict):
        self.config = config
        self.recordings = {}
        self.fixations = {}
        self.sequences = {}
        fx = config["fixation"]
        for manifest in config["recordings"]:
            rec = load_recording(manifest, gaze_space=config.get("gaze_space", "norm"))
            self.recordings[rec.id] = rec
            fixations = detect_fixations(
                rec,
                dispersion_threshold=fx["dispersion_threshold"],
                min_duration_ms=fx["min_duration_ms"],
                patch_px=fx["patch_px"],
            )
            self.fixations[rec.id] = fixations
            features = (
                np.stack([f.feature for f in fixations]) if fixations else np.zeros((0, 72))
            )
            self.sequences[rec.id] = FeatureSequence(features, recording_id=rec.id)

        self.store = AnnotationStore()
        for rec_id, fixations in self.fixations.items():
            self.store.register(rec_id, len(fixations))
        self.annotations_dir = (
            Path(config["annotations_dir"]) if config.get("annotations_dir") else None
        )
        if self.annotations_dir and self.annotations_dir.is_dir():
            for path in sorted(self.annotations_dir.glob("*.json")):
                self.store.load(path)
        if config.get("labels") and Path(config["labels"]).exists():
            self.scheme = load_label_scheme(config["labels"])
        else:
            self.scheme = LabelScheme(labels=[])

        self._write_locks = {rec_id: threading.Lock() for rec_id in self.recordings}
        self._cache: dict[tuple, bytes] = {}
        self._cache_locks: dict[tuple, threading.Lock] = {}
        self._cache_master = threading.Lock()
        self.recommendations: dict[str, list[dict]] = {}
        self.selections: dict[tuple[str, str], dict] = {}

    def recording(self, rec_id: str):
        if rec_id not in self.recordings:
            raise HTTPException(status_code=404, detail=f"unknown recording {rec_id!r}")
        return self.recordings[rec_id]

    def write_lock(self, rec_id: str) -> threading.Lock:
        return self._write_locks[rec_id]

    def persist(self, rec_id: str) -> None:
        if self.annotations_dir:
            self.annotations_dir.mkdir(parents=True, exist_ok=True)
            self.store.save(rec_id, self.annotations_dir / f"{rec_id}.json")

    def effective_scheme(self, rec_id: str) -> LabelScheme:
        """Configured scheme extended with ad-hoc labels seen in the store,
        so scarfs and symbol maps never miss a label."""
        labels = list(self.scheme.labels)
        known = {name for name, _ in labels} | {self.scheme.background[0]}
        for ann in sorted(self.store.get(rec_id), key=lambda a: (a.created_at, a.id)):
            if ann.label not in known:
                labels.append((ann.label, ann.color))
                known.add(ann.label)
        return LabelScheme(labels=labels, background=self.scheme.background)

    def cached_png(self, key: tuple, render) -> bytes:
        with self._cache_master:
            if key in self._cache:
                return self._cache[key]
            lock = self._cache_locks.setdefault(key, threading.Lock())
        with lock:
            with self._cache_master:
                if key in self._cache:
                    return self._cache[key]
            data = render()
            with self._cache_master:
                self._cache[key] = data
            return data

    def recommend(self, rec_id: str, start: int, end: int) -> list[dict]:
        """Candidate spans similar to the selection, inside one recording.
        The selection itself is filtered out; thumbnails link per fixation."""
        seq = self.sequences[rec_id]
        span = QuerySpan(rec_id, start, end)
        results = find_similar_spans(
            span,
            seq,
            [seq],
            threshold=self.config["query"]["threshold"],
            max_results=self.config["query"]["max_results"] + 1,
        )
        out = []
        for result in results:
            if result.span.start_fixation <= end and start <= result.span.end_fixation:
                continue  # overlaps the selection itself
            doc = result.to_dict()
            doc["thumbnail_url"] = (
                f"/api/recordings/{rec_id}/thumbnail/{result.span.start_fixation}"
            )
            out.append(doc)
        return out[: self.config["query"]["max_results"]]


def _parse_highlights(text: str | None) -> list[tuple[int, int]]:
    spans = []
    if not text:
        return spans
    for chunk in text.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        body = chunk.split(":")[0]
        try:
            start, end = (int(v) for v in body.split("-"))
        except ValueError:
            raise HTTPException(status_code=400, detail=f"bad highlight span {chunk!r}")
        spans.append((start, end))
    return spans


def create_app(config: dict) -> FastAPI:
    session = Session(config)
    app = FastAPI(title="gazespiral", version="0.1.0")
    app.state.session = session

    def spiral_key(rec_id, a, k, stride, highlights):
        return ("spiral", rec_id, a, k, stride, tuple(highlights))

    @app.get("/api/recordings")
    def list_recordings():
        out = []
        for rec_id in sorted(session.recordings):
            rec = session.recordings[rec_id]
            out.append(
                {
                    "id": rec_id,
                    "frame_count": rec.frame_count,
                    "fps": rec.fps,
                    "width": rec.frames.width_px,
                    "height": rec.frames.height_px,
                    "fixation_count": len(session.fixations[rec_id]),
                }
            )
        return out

    @app.get("/api/recordings/{rec_id}")
    def get_recording(rec_id: str):
        rec = session.recording(rec_id)
        return {
            "id": rec_id,
            "frame_count": rec.frame_count,
            "fps": rec.fps,
            "width": rec.frames.width_px,
            "height": rec.frames.height_px,
            "fixation_count": len(session.fixations[rec_id]),
            "annotation_count": len(session.store.get(rec_id)),
        }

    @app.get("/api/recordings/{rec_id}/quality")
    def get_quality(rec_id: str):
        rec = session.recording(rec_id)
        return data_quality(rec).to_dict()

    @app.get("/api/recordings/{rec_id}/fixations")
    def get_fixations(rec_id: str):
        session.recording(rec_id)
        return fixations_to_json(session.fixations[rec_id])

    @app.get("/api/recordings/{rec_id}/thumbnail/{fixation}")
    def get_thumbnail(rec_id: str, fixation: int):
        rec = session.recording(rec_id)
        fixations = session.fixations[rec_id]
        if not 0 <= fixation < len(fixations):
            raise HTTPException(status_code=404, detail="unknown fixation")

        def render() -> bytes:
            fix = fixations[fixation]
            frame = rec.frames.get_frame(fix.middle_frame)
            thumb = make_thumbnail(
                frame, (fix.centroid_x, fix.centroid_y),
                source_frame=fix.middle_frame, fixation_index=fixation,
            )
            return _png_bytes(thumb.pixels)

        return _png_response(session.cached_png(("thumb", rec_id, fixation), render))

    def _sequence_for(rec_id: str, stride: int):
        rec = session.recording(rec_id)
        slit = session.config["slitscan"]
        mode_name = slit["mode"]
        if mode_name == "static-center":
            mode = SlitscanMode.static_center()
        elif mode_name == "gaze-local":
            mode = SlitscanMode.gaze_local(slit["half_height_px"])
        else:
            mode = SlitscanMode.gaze_global()
        return extract_sequence(rec, mode, height=slit["height"], stride=stride)

    def _params_with(a, k, stride):
        base = session.config["spiral"]
        return SpiralParams(
            a=a if a is not None else base["a"],
            k=k if k is not None else base["k"],
            h_px=base["h_px"],
            stride=stride,
            t_step=base["t_step"],
            clockwise=base["clockwise"],
        )

    @app.get("/api/recordings/{rec_id}/spiral")
    def get_spiral(
        rec_id: str,
        a: float | None = Query(default=None),
        k: float | None = Query(default=None),
        stride: int | None = Query(default=None),
        highlights: str | None = Query(default=None),
    ):
        session.recording(rec_id)
        stride = stride or session.config["slitscan"]["stride"]
        spans = _parse_highlights(highlights)
        key = spiral_key(rec_id, a, k, stride, spans)

        def render() -> bytes:
            seq = _sequence_for(rec_id, stride)
            params = _params_with(a, k, stride)
            overlay = OverlaySpec()
            fixations = session.fixations[rec_id]
            for start, end in spans:
                if not (0 <= start <= end < len(fixations)):
                    raise HTTPException(status_code=400, detail="highlight span out of bounds")
                sl = frame_span_to_scanline_span(
                    fixations[start].start_frame, fixations[end].end_frame, stride
                )
                if sl:
                    overlay.highlights.append((sl[0], sl[1], (255, 215, 0)))
            return _png_bytes(render_spiral(seq, params, overlay))

        return _png_response(session.cached_png(key, render))

    @app.get("/api/recordings/{rec_id}/geometry")
    def get_geometry(
        rec_id: str,
        a: float | None = Query(default=None),
        k: float | None = Query(default=None),
        stride: int | None = Query(default=None),
    ):
        rec = session.recording(rec_id)
        stride = stride or session.config["slitscan"]["stride"]
        params = _params_with(a, k, stride)
        n_scanlines = -(-rec.frame_count // stride)
        return build_geometry(n_scanlines, params).to_debug_dict()

    @app.get("/api/recordings/{rec_id}/scarf")
    def get_scarf(rec_id: str, width: int | None = None, height: int = 24):
        rec = session.recording(rec_id)
        scheme = session.effective_scheme(rec_id)
        strip = export_scarf(
            session.fixations[rec_id],
            session.store,
            scheme,
            rec_id,
            rec.frame_count,
            width_px=width,
            height_px=height,
        )
        return _png_response(_png_bytes(strip))

    @app.get("/api/recordings/{rec_id}/annotations")
    def get_annotations(rec_id: str):
        session.recording(rec_id)
        return {
            "version": 1,
            "recording_id": rec_id,
            "annotations": [a.to_dict() for a in session.store.get(rec_id)],
        }

    @app.post("/api/recordings/{rec_id}/annotations", status_code=201)
    def post_annotation(rec_id: str, body: AnnotationIn):
        session.recording(rec_id)
        with session.write_lock(rec_id):
            for existing in session.store.get(rec_id):
                if (
                    existing.start_fixation == body.start_fixation
                    and existing.end_fixation == body.end_fixation
                    and existing.label == body.label
                ):
                    raise HTTPException(status_code=409, detail="duplicate annotation")
            annotation = Annotation(
                recording_id=rec_id,
                start_fixation=body.start_fixation,
                end_fixation=body.end_fixation,
                label=body.label,
                color=tuple(body.color) if body.color else (255, 215, 0),
                author=body.author,
            )
            try:
                ann_id = session.store.add(annotation)
            except ValueError as exc:
                raise HTTPException(status_code=400, detail=str(exc))
            session.persist(rec_id)
            # every annotation write refreshes the recommendation cache
            candidates = session.recommend(rec_id, body.start_fixation, body.end_fixation)
            session.recommendations[rec_id] = candidates
        return {"id": ann_id, "candidates": candidates}

    @app.delete("/api/recordings/{rec_id}/annotations", status_code=204)
    def delete_annotation(rec_id: str, id: int | None = Query(default=None)):
        session.recording(rec_id)
        if id is None:
            raise HTTPException(status_code=400, detail="pass ?id=<annotation id>")
        with session.write_lock(rec_id):
            if not session.store.remove(rec_id, id):
                raise HTTPException(status_code=404, detail="unknown annotation id")
            session.persist(rec_id)
            session.recommendations.pop(rec_id, None)
        return Response(status_code=204)

    @app.get("/api/recordings/{rec_id}/recommendations")
    def get_recommendations(
        rec_id: str,
        start: int | None = Query(default=None),
        end: int | None = Query(default=None),
    ):
        session.recording(rec_id)
        if start is not None and end is not None:
            fixations = session.fixations[rec_id]
            if not 0 <= start <= end < len(fixations):
                raise HTTPException(status_code=400, detail="selection span out of bounds")
            return {"candidates": session.recommend(rec_id, start, end)}
        return {"candidates": session.recommendations.get(rec_id, [])}

    @app.post("/api/query")
    def post_query(body: QueryIn):
        if body.recording_id not in session.sequences:
            raise HTTPException(status_code=404, detail="unknown recording")
        source = session.sequences[body.recording_id]
        if not 0 <= body.start_fixation <= body.end_fixation < len(source):
            raise HTTPException(status_code=400, detail="query span out of bounds")
        target_ids = body.targets or sorted(session.sequences)
        unknown = [t for t in target_ids if t not in session.sequences]
        if unknown:
            raise HTTPException(status_code=404, detail=f"unknown targets {unknown}")
        span = QuerySpan(body.recording_id, body.start_fixation, body.end_fixation)
        results = find_similar_spans(
            span,
            source,
            [session.sequences[t] for t in target_ids],
            threshold=body.threshold,
            max_results=session.config["query"]["max_results"],
        )
        return results_to_json(results)

    @app.get("/api/labels")
    def get_labels():
        return session.scheme.to_dict()

    @app.put("/api/labels")
    def put_labels(body: LabelSchemeIn):
        try:
            session.scheme = LabelScheme(
                labels=[(item.label, tuple(item.color)) for item in body.labels],
                background=(body.background.label, tuple(body.background.color)),
            )
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        if session.config.get("labels"):
            from .annotate import save_label_scheme

            save_label_scheme(session.scheme, session.config["labels"])
        return session.scheme.to_dict()

    @app.get("/api/selection")
    def get_selection(
        recording_id: str,
        x_client_token: str = Header(default="anon"),
    ):
        session.recording(recording_id)
        sel = session.selections.get((x_client_token, recording_id))
        if sel is None:
            sel = {"recording_id": recording_id, "anchor_fixation": 0, "extent": 1}
        return sel

    @app.put("/api/selection")
    def put_selection(body: SelectionIn, x_client_token: str = Header(default="anon")):
        session.recording(body.recording_id)
        count = len(session.fixations[body.recording_id])
        if count == 0:
            raise HTTPException(status_code=400, detail="recording has no fixations")
        anchor = min(max(body.anchor_fixation, 0), count - 1)
        extent = min(max(body.extent, 1), count - anchor)
        sel = {"recording_id": body.recording_id, "anchor_fixation": anchor, "extent": extent}
        session.selections[(x_client_token, body.recording_id)] = sel
        return sel

    return app
