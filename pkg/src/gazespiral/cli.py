"""Batch pipeline entry points: quality, render, compare, query, serve.

Every command takes a JSON project config plus flag overrides and writes
its outputs atomically into the configured output directory. Exit codes:
0 success, 2 ingest failure, 3 insufficient inputs, 4 invalid arguments.
"""
from __future__ import annotations

import argparse
import copy
import io
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import cut_dendrogram_k, embed_smacof, hca_average_linkage, layout_glyphs
from .annotate import AnnotationStore, load_label_scheme, to_symbol_sequence
from .fixation import detect_fixations, fixations_to_json
from .ingest import IngestError, Recording, data_quality, load_recording
from .metrics import DistanceMatrix, FeatureSequence, pairwise_matrix, pearson
from .query import QuerySpan, find_similar_spans, results_to_json
from .slitscan import SlitscanMode, extract_sequence, render_linear
from .spiral import (
    OverlaySpec,
    SpiralParams,
    build_geometry,
    frame_span_to_scanline_span,
    render_glyph,
    render_spiral,
)

EXIT_OK = 0
EXIT_INGEST = 2
EXIT_INPUTS = 3
EXIT_ARGS = 4

HIGHLIGHT_COLOR = (255, 215, 0)  # yellow query borders

FIXATION_PALETTE = [
    (31, 119, 180),
    (255, 127, 14),
    (44, 160, 44),
    (214, 39, 40),
    (148, 103, 189),
    (140, 86, 75),
    (227, 119, 194),
    (127, 127, 127),
]

DEFAULT_CONFIG = {
    "recordings": [],
    "output_dir": "out",
    "gaze_space": "norm",
    "spiral": {"a": 1.0, "k": 1.0, "h_px": 100, "t_step": None, "clockwise": True},
    "slitscan": {"mode": "gaze-global", "height": 100, "stride": 1, "half_height_px": 50},
    "fixation": {"dispersion_threshold": 0.05, "min_duration_ms": 100.0, "patch_px": 64},
    "metrics": {"methods": ["levenshtein", "smith_waterman", "dtw"], "feature_gap": None, "symbol_gap": None},
    "embedding": {"max_iter": 500, "eps": 1e-12, "seed": 42},
    "glyphs": {"glyph_px": 192, "canvas_px": 1400},
    "query": {"threshold": 0.8, "max_results": 10},
    "labels": None,
    "annotations_dir": None,
}


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad flags; our contract reserves 2 for
    ingest failures, so remap to 4."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(EXIT_ARGS)


def _deep_merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = value
    return out


def load_config(path) -> dict:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    config = _deep_merge(DEFAULT_CONFIG, doc)
    base = Path(path).parent
    config["recordings"] = [str(base / p) for p in config["recordings"]]
    if config["labels"]:
        config["labels"] = str(base / config["labels"])
    if config["annotations_dir"]:
        config["annotations_dir"] = str(base / config["annotations_dir"])
    return config


def _apply_overrides(config: dict, args: argparse.Namespace) -> None:
    mapping = [
        ("output_dir", ("output_dir",)),
        ("gaze_space", ("gaze_space",)),
        ("a", ("spiral", "a")),
        ("k", ("spiral", "k")),
        ("h_px", ("spiral", "h_px")),
        ("t_step", ("spiral", "t_step")),
        ("mode", ("slitscan", "mode")),
        ("height", ("slitscan", "height")),
        ("stride", ("slitscan", "stride")),
        ("half_height", ("slitscan", "half_height_px")),
        ("dispersion", ("fixation", "dispersion_threshold")),
        ("min_duration", ("fixation", "min_duration_ms")),
        ("seed", ("embedding", "seed")),
        ("glyph_px", ("glyphs", "glyph_px")),
        ("canvas_px", ("glyphs", "canvas_px")),
    ]
    for attr, keys in mapping:
        value = getattr(args, attr, None)
        if value is None:
            continue
        target = config
        for key in keys[:-1]:
            target = target[key]
        target[keys[-1]] = value
    if getattr(args, "counter_clockwise", False):
        config["spiral"]["clockwise"] = False
    if getattr(args, "methods", None):
        config["metrics"]["methods"] = [m.strip() for m in args.methods.split(",") if m.strip()]


def _write_bytes(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def save_png(path, image: np.ndarray) -> None:
    from PIL import Image

    buf = io.BytesIO()
    Image.fromarray(image).save(buf, format="PNG")
    _write_bytes(Path(path), buf.getvalue())


def save_json(path, doc) -> None:
    _write_bytes(Path(path), json.dumps(doc, indent=2).encode("utf-8"))


def save_text(path, text: str) -> None:
    _write_bytes(Path(path), text.encode("utf-8"))


def _load_recordings(config: dict) -> list[Recording]:
    recordings = []
    for manifest in config["recordings"]:
        recordings.append(load_recording(manifest, gaze_space=config["gaze_space"]))
    return recordings


def _slitscan_mode(config: dict) -> SlitscanMode:
    name = config["slitscan"]["mode"]
    if name == "static-center":
        return SlitscanMode.static_center()
    if name == "gaze-global":
        return SlitscanMode.gaze_global()
    if name == "gaze-local":
        return SlitscanMode.gaze_local(config["slitscan"]["half_height_px"])
    raise ValueError(f"unknown slitscan mode {name!r}")


def _spiral_params(config: dict) -> SpiralParams:
    s = config["spiral"]
    return SpiralParams(
        a=s["a"],
        k=s["k"],
        h_px=s["h_px"],
        stride=config["slitscan"]["stride"],
        t_step=s["t_step"],
        clockwise=s["clockwise"],
    )


def _warn_stride(rec: Recording, stride: int) -> None:
    # The recommended floor is a quarter of the original samples.
    limit = 4.0 * rec.fps / 25.0
    if stride > limit:
        print(
            f"warning: {rec.id}: stride {stride} drops below a quarter of the samples "
            f"(recommended max {limit:.1f} at {rec.fps:g} fps); fixation patterns may vanish",
            file=sys.stderr,
        )


def _detect_all(config: dict, recordings: list[Recording]):
    fx = config["fixation"]
    out = {}
    for rec in recordings:
        out[rec.id] = detect_fixations(
            rec,
            dispersion_threshold=fx["dispersion_threshold"],
            min_duration_ms=fx["min_duration_ms"],
            patch_px=fx["patch_px"],
        )
    return out


def _load_annotation_state(config: dict, fixations_by_id: dict):
    """Label scheme and annotation store when the project provides them."""
    if not config["labels"]:
        return None, None
    scheme = load_label_scheme(config["labels"])
    store = AnnotationStore()
    for rec_id, fixations in fixations_by_id.items():
        store.register(rec_id, len(fixations))
    ann_dir = config["annotations_dir"]
    if ann_dir:
        for path in sorted(Path(ann_dir).glob("*.json")):
            store.load(path)
    return scheme, store


def cmd_quality(config: dict) -> int:
    from .figures import save_quality_figure

    recordings = _load_recordings(config)
    if not recordings:
        print("no recordings configured", file=sys.stderr)
        return EXIT_INPUTS
    out_dir = Path(config["output_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    reports = {}
    for rec in recordings:
        report = data_quality(rec)
        reports[rec.id] = report
        save_json(out_dir / f"{rec.id}_quality.json", report.to_dict())
        print(
            f"{rec.id}: {report.invalid_samples}/{report.total_samples} invalid "
            f"({report.loss_fraction:.1%}), longest run {report.longest_invalid_run_frames}"
        )
    lines = ["recording_id,total_samples,invalid_samples,loss_fraction,longest_invalid_run_frames"]
    for rec_id in sorted(reports):
        r = reports[rec_id]
        lines.append(
            f"{rec_id},{r.total_samples},{r.invalid_samples},{r.loss_fraction:.6f},"
            f"{r.longest_invalid_run_frames}"
        )
    save_text(out_dir / "quality_summary.csv", "\n".join(lines) + "\n")
    save_quality_figure(reports, out_dir / "quality_overview.png")
    print(f"wrote {out_dir}/quality_summary.csv and quality_overview.png")
    return EXIT_OK


def _fixation_overlay(config: dict, rec: Recording, fixations, scheme, store) -> OverlaySpec:
    overlay = OverlaySpec()
    if scheme is None or store is None or config["spiral"]["a"] <= 1.0:
        return overlay
    stride = config["slitscan"]["stride"]
    from .annotate import _winning_labels

    labels = _winning_labels(store.get(rec.id), len(fixations), scheme.background[0])
    for fixation, label in zip(fixations, labels):
        if label == scheme.background[0]:
            continue
        span = frame_span_to_scanline_span(fixation.start_frame, fixation.end_frame, stride)
        if span:
            overlay.fixation_colors.append((span[0], span[1], scheme.color_of(label)))
    return overlay


def cmd_render(config: dict, dump_geometry: bool = True, max_width: int | None = None) -> int:
    recordings = _load_recordings(config)
    if not recordings:
        print("no recordings configured", file=sys.stderr)
        return EXIT_INPUTS
    out_dir = Path(config["output_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    mode = _slitscan_mode(config)
    params = _spiral_params(config)
    stride = config["slitscan"]["stride"]

    scheme = store = None
    fixations_by_id: dict = {}
    if config["labels"] and params.a > 1.0:
        fixations_by_id = _detect_all(config, recordings)
        scheme, store = _load_annotation_state(config, fixations_by_id)

    for rec in recordings:
        _warn_stride(rec, stride)
        seq = extract_sequence(rec, mode, height=config["slitscan"]["height"], stride=stride)
        save_png(out_dir / f"{rec.id}_linear.png", render_linear(seq, max_width_px=max_width))
        overlay = _fixation_overlay(config, rec, fixations_by_id.get(rec.id, []), scheme, store)
        save_png(out_dir / f"{rec.id}_spiral.png", render_spiral(seq, params, overlay))
        if dump_geometry:
            geometry = build_geometry(len(seq), params)
            save_json(out_dir / f"{rec.id}_geometry.json", geometry.to_debug_dict())
        print(f"{rec.id}: rendered {len(seq)} scanlines")
    return EXIT_OK


def cmd_compare(config: dict) -> int:
    from .figures import compose_glyph_canvas, save_compare_figure, save_dendrogram_figure

    recordings = _load_recordings(config)
    if len(recordings) < 2:
        print("compare needs at least 2 recordings", file=sys.stderr)
        return EXIT_INPUTS
    out_dir = Path(config["output_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)

    fixations_by_id = _detect_all(config, recordings)
    for rec in recordings:
        if not fixations_by_id[rec.id]:
            print(f"{rec.id}: no fixations detected, cannot align", file=sys.stderr)
            return EXIT_INPUTS
        save_json(out_dir / f"{rec.id}_fixations.json", fixations_to_json(fixations_by_id[rec.id]))

    ids = [rec.id for rec in recordings]
    feature_seqs = [
        FeatureSequence(np.stack([f.feature for f in fixations_by_id[i]]), recording_id=i)
        for i in ids
    ]
    matrices: dict[str, DistanceMatrix] = {}
    for method in config["metrics"]["methods"]:
        matrix = pairwise_matrix(feature_seqs, method, gap=config["metrics"]["feature_gap"])
        matrices[f"feature_{method}"] = matrix
        save_text(out_dir / f"matrix_feature_{method}.json", matrix.to_json())

    scheme, store = _load_annotation_state(config, fixations_by_id)
    if scheme is not None:
        symbol_seqs = [
            to_symbol_sequence(fixations_by_id[i], store, scheme, i) for i in ids
        ]
        for method in config["metrics"]["methods"]:
            matrix = pairwise_matrix(symbol_seqs, method, gap=config["metrics"]["symbol_gap"])
            matrices[f"aoi_{method}"] = matrix
            save_text(out_dir / f"matrix_aoi_{method}.json", matrix.to_json())

    names = sorted(matrices)
    corr_lines = ["matrix_a,matrix_b,pearson"]
    for i, na in enumerate(names):
        for nb in names[i + 1 :]:
            try:
                r = pearson(matrices[na], matrices[nb])
                corr_lines.append(f"{na},{nb},{r:.6f}")
                print(f"pearson({na}, {nb}) = {r:.4f}")
            except ValueError as exc:
                corr_lines.append(f"{na},{nb},nan")
                print(f"pearson({na}, {nb}) skipped: {exc}", file=sys.stderr)
    save_text(out_dir / "correlations.csv", "\n".join(corr_lines) + "\n")

    primary = matrices[f"feature_{config['metrics']['methods'][0]}"]
    dendrogram = hca_average_linkage(primary)
    save_text(out_dir / "dendrogram.json", dendrogram.to_json())
    save_dendrogram_figure(dendrogram, ids, out_dir / "dendrogram.png")

    emb = config["embedding"]
    embedding = embed_smacof(primary, max_iter=emb["max_iter"], eps=emb["eps"], seed=emb["seed"])
    save_text(out_dir / "embedding.json", embedding.to_json())
    two_groups = cut_dendrogram_k(dendrogram, min(2, len(ids)))
    group_of = {leaf: gi for gi, cluster in enumerate(two_groups) for leaf in cluster}
    save_compare_figure(
        dendrogram, embedding, ids, out_dir / "compare_overview.png",
        groups=[group_of[i] for i in range(len(ids))],
    )

    mode = _slitscan_mode(config)
    params = _spiral_params(config)
    glyph_px = config["glyphs"]["glyph_px"]
    glyphs = []
    for rec in recordings:
        seq = extract_sequence(rec, mode, height=config["slitscan"]["height"],
                               stride=config["slitscan"]["stride"])
        glyphs.append(render_glyph(seq, params, glyph_px=glyph_px))
    layout = layout_glyphs(embedding, glyph_px, config["glyphs"]["canvas_px"])
    save_png(out_dir / "embedding_glyphs.png", compose_glyph_canvas(glyphs, layout))
    print(f"wrote matrices, dendrogram, embedding and glyph figure to {out_dir}")
    return EXIT_OK


def cmd_query(config: dict, args) -> int:
    recordings = _load_recordings(config)
    if not recordings:
        print("no recordings configured", file=sys.stderr)
        return EXIT_INPUTS
    by_id = {rec.id: rec for rec in recordings}
    if args.recording not in by_id:
        print(f"unknown recording {args.recording!r}", file=sys.stderr)
        return EXIT_ARGS

    fixations_by_id = _detect_all(config, recordings)
    sequences = {
        rec_id: FeatureSequence(
            np.stack([f.feature for f in fixations]) if fixations else np.zeros((0, 72)),
            recording_id=rec_id,
        )
        for rec_id, fixations in fixations_by_id.items()
    }
    source = sequences[args.recording]
    if not (0 <= args.start <= args.end < len(source)):
        print(
            f"span ({args.start}, {args.end}) invalid for {len(source)} fixations",
            file=sys.stderr,
        )
        return EXIT_ARGS

    target_ids = [t.strip() for t in args.targets.split(",")] if args.targets else sorted(by_id)
    unknown = [t for t in target_ids if t not in by_id]
    if unknown:
        print(f"unknown target recordings: {unknown}", file=sys.stderr)
        return EXIT_ARGS

    span = QuerySpan(args.recording, args.start, args.end)
    results = find_similar_spans(
        span,
        source,
        [sequences[t] for t in target_ids],
        threshold=args.threshold if args.threshold is not None else config["query"]["threshold"],
        max_results=args.max_results or config["query"]["max_results"],
    )
    out_dir = Path(config["output_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    save_json(out_dir / "query_results.json", results_to_json(results))
    print(f"{len(results)} result spans")

    mode = _slitscan_mode(config)
    params = _spiral_params(config)
    stride = config["slitscan"]["stride"]
    for rec_id in target_ids:
        rec = by_id[rec_id]
        seq = extract_sequence(rec, mode, height=config["slitscan"]["height"], stride=stride)
        overlay = OverlaySpec()
        fixations = fixations_by_id[rec_id]
        for result in results:
            if result.recording_id != rec_id:
                continue
            start_frame = fixations[result.span.start_fixation].start_frame
            end_frame = fixations[result.span.end_fixation].end_frame
            sl_span = frame_span_to_scanline_span(start_frame, end_frame, stride)
            if sl_span:
                overlay.highlights.append((sl_span[0], sl_span[1], HIGHLIGHT_COLOR))
        save_png(out_dir / f"{rec_id}_query_spiral.png", render_spiral(seq, params, overlay))
    return EXIT_OK


def cmd_serve(config: dict, args) -> int:
    import uvicorn

    from .server import create_app

    app = create_app(config)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="gazespiral", description=__doc__)
    parser.add_argument("--version", action="version", version=f"gazespiral {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", required=True, help="project config JSON")
        p.add_argument("--output-dir")
        p.add_argument("--gaze-space", dest="gaze_space", choices=["norm", "pixels"])
        p.add_argument("--a", type=float)
        p.add_argument("--k", type=float)
        p.add_argument("--h-px", dest="h_px", type=int)
        p.add_argument("--t-step", dest="t_step", type=float)
        p.add_argument("--counter-clockwise", action="store_true")
        p.add_argument("--mode", choices=["static-center", "gaze-global", "gaze-local"])
        p.add_argument("--height", type=int)
        p.add_argument("--stride", type=int)
        p.add_argument("--half-height", dest="half_height", type=int)
        p.add_argument("--dispersion", type=float)
        p.add_argument("--min-duration", dest="min_duration", type=float)
        p.add_argument("--seed", type=int)
        p.add_argument("--methods", help="comma-separated metric list")
        p.add_argument("--glyph-px", dest="glyph_px", type=int)
        p.add_argument("--canvas-px", dest="canvas_px", type=int)

    add_common(sub.add_parser("quality", help="data quality reports"))
    render = sub.add_parser("render", help="spiral and linear slitscans")
    add_common(render)
    render.add_argument("--no-geometry", action="store_true", help="skip geometry debug JSON")
    render.add_argument("--max-width", type=int, help="cap linear slitscan width (box filter)")
    add_common(sub.add_parser("compare", help="matrices, clustering, embedding, glyph figure"))
    query = sub.add_parser("query", help="similarity search with highlighted spirals")
    add_common(query)
    query.add_argument("--recording", required=True)
    query.add_argument("--start", type=int, required=True)
    query.add_argument("--end", type=int, required=True)
    query.add_argument("--threshold", type=float)
    query.add_argument("--max-results", dest="max_results", type=int)
    query.add_argument("--targets", help="comma-separated target recording ids")
    serve = sub.add_parser("serve", help="run the HTTP service")
    add_common(serve)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8750)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"cannot load config {args.config}: {exc}", file=sys.stderr)
        return EXIT_ARGS
    _apply_overrides(config, args)
    try:
        if args.command == "quality":
            return cmd_quality(config)
        if args.command == "render":
            return cmd_render(config, dump_geometry=not args.no_geometry, max_width=args.max_width)
        if args.command == "compare":
            return cmd_compare(config)
        if args.command == "query":
            return cmd_query(config, args)
        if args.command == "serve":
            return cmd_serve(config, args)
    except IngestError as exc:
        print(f"ingest error: {exc}", file=sys.stderr)
        return EXIT_INGEST
    except ValueError as exc:
        print(f"invalid arguments: {exc}", file=sys.stderr)
        return EXIT_ARGS
    parser.error(f"unknown command {args.command!r}")
    return EXIT_ARGS


if __name__ == "__main__":
    sys.exit(main())
