"""Report figures written by the CLI alongside the delimited outputs."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .analysis import Dendrogram, Embedding2D, GlyphLayout
from .ingest import DataQualityReport


def _leaf_order(dendrogram: Dendrogram) -> list[int]:
    children = {new_id: (a, b) for a, b, _h, new_id in dendrogram.merges}
    root = dendrogram.merges[-1][3] if dendrogram.merges else 0
    order: list[int] = []
    stack = [root]
    while stack:
        node = stack.pop()
        if node < dendrogram.n_leaves:
            order.append(node)
        else:
            a, b = children[node]
            stack.append(b)
            stack.append(a)
    return order


def draw_dendrogram(ax, dendrogram: Dendrogram, labels: list[str] | None = None) -> None:
    order = _leaf_order(dendrogram)
    xpos = {leaf: float(i) for i, leaf in enumerate(order)}
    height = {leaf: 0.0 for leaf in order}
    for a, b, h, new_id in dendrogram.merges:
        xa, xb = xpos[a], xpos[b]
        ax.plot([xa, xa], [height[a], h], color="tab:blue", linewidth=1.2)
        ax.plot([xb, xb], [height[b], h], color="tab:blue", linewidth=1.2)
        ax.plot([xa, xb], [h, h], color="tab:blue", linewidth=1.2)
        xpos[new_id] = (xa + xb) / 2.0
        height[new_id] = h
    ax.set_xticks(range(len(order)))
    names = labels or [str(i) for i in range(dendrogram.n_leaves)]
    ax.set_xticklabels([names[leaf] for leaf in order], rotation=90, fontsize=8)
    ax.set_ylabel("merge distance")


def save_dendrogram_figure(dendrogram: Dendrogram, labels: list[str] | None, path) -> None:
    fig, ax = plt.subplots(figsize=(max(4.0, 0.5 * dendrogram.n_leaves), 4.0))
    draw_dendrogram(ax, dendrogram, labels)
    ax.set_title("Average-linkage clustering")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_quality_figure(reports: dict[str, DataQualityReport], path) -> None:
    """Loss fraction per recording plus the temporal layout of invalid runs."""
    ids = sorted(reports)
    fig, (ax_bar, ax_runs) = plt.subplots(
        2, 1, figsize=(8.0, 2.0 + 0.6 * len(ids)), height_ratios=[1, 1.4]
    )
    losses = [reports[i].loss_fraction for i in ids]
    ax_bar.barh(range(len(ids)), losses, color="tab:red")
    ax_bar.set_yticks(range(len(ids)))
    ax_bar.set_yticklabels(ids, fontsize=8)
    ax_bar.set_xlim(0, 1)
    ax_bar.set_xlabel("loss fraction")
    ax_bar.invert_yaxis()

    for row, rec_id in enumerate(ids):
        report = reports[rec_id]
        ax_runs.broken_barh(
            [(start, end - start + 1) for start, end in report.invalid_runs],
            (row - 0.35, 0.7),
            color="black",
        )
        ax_runs.plot([0, report.total_samples], [row, row], color="0.85", zorder=0)
    ax_runs.set_yticks(range(len(ids)))
    ax_runs.set_yticklabels(ids, fontsize=8)
    ax_runs.set_xlabel("frame")
    ax_runs.set_title("invalid runs", fontsize=9)
    ax_runs.invert_yaxis()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_compare_figure(
    dendrogram: Dendrogram,
    embedding: Embedding2D,
    labels: list[str],
    path,
    groups: list[int] | None = None,
) -> None:
    """Side-by-side dendrogram and 2D embedding scatter."""
    fig, (ax_dend, ax_emb) = plt.subplots(1, 2, figsize=(11.0, 4.5))
    draw_dendrogram(ax_dend, dendrogram, labels)
    ax_dend.set_title("clustering")

    points = np.asarray(embedding.points)
    colors = groups if groups is not None else "tab:blue"
    ax_emb.scatter(points[:, 0], points[:, 1], c=colors, cmap="tab10", s=40)
    for (x, y), name in zip(points, labels):
        ax_emb.annotate(name, (x, y), fontsize=7, xytext=(3, 3), textcoords="offset points")
    ax_emb.set_title(f"embedding (stress {embedding.stress:.3g})")
    ax_emb.set_aspect("equal", adjustable="datalim")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def compose_glyph_canvas(glyphs: list[np.ndarray], layout: GlyphLayout) -> np.ndarray:
    """Paste pre-rendered glyph images at their layout placements."""
    canvas = np.full((layout.canvas_px, layout.canvas_px, 3), 255, dtype=np.uint8)
    for glyph, ((cx, cy), scale) in zip(glyphs, layout.placements):
        size = int(round(layout.glyph_px * scale))
        if glyph.shape[0] != size:
            from PIL import Image

            glyph = np.asarray(
                Image.fromarray(glyph).resize((size, size), Image.BILINEAR), dtype=np.uint8
            )
        top = int(round(cy - size / 2))
        left = int(round(cx - size / 2))
        top = max(0, min(top, layout.canvas_px - size))
        left = max(0, min(left, layout.canvas_px - size))
        canvas[top : top + size, left : left + size] = glyph
    return canvas
