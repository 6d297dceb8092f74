"""Archimedean spiral geometry and spiral slitscan rendering.

The spiral baseline follows phi(t) = t**k, r(t) = a * phi(t) / (2*pi) in
units of one scanline height. Scanlines sit on quads orthogonal to the
baseline, pointing outward, so consecutive quads share an edge and cover
the band between adjacent arms without gaps. Time starts in the center
and runs clockwise by default.
"""
from __future__ import annotations

import base64
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .slitscan import SlitscanSequence

BACKGROUND = (255, 255, 255)
DEFAULT_GLYPH_PX = 256
INNER_TURN_SCANLINES = 64  # default angular resolution of the first turn

Color = tuple[int, int, int]


@dataclass(frozen=True)
class SpiralParams:
    a: float = 1.0  # distance between arms, in scanline heights
    k: float = 1.0  # angle exponent; < 1 compresses long recordings
    h_px: int = 100  # pixels per spiral unit (rendered scanline height)
    stride: int = 1
    t_step: float | None = None  # defaults to one 64th of the first turn
    clockwise: bool = True

    def __post_init__(self):
        if self.a <= 0:
            raise ValueError("a must be positive")
        if self.k <= 0:
            raise ValueError("k must be positive")
        if self.h_px <= 0:
            raise ValueError("h_px must be positive")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        if self.t_step is not None and self.t_step <= 0:
            raise ValueError("t_step must be positive")

    def resolved_t_step(self) -> float:
        if self.t_step is not None:
            return self.t_step
        return (2.0 * math.pi) ** (1.0 / self.k) / INNER_TURN_SCANLINES


@dataclass
class SpiralGeometry:
    baseline_points: np.ndarray  # (n+1, 2)
    quads: np.ndarray  # (n, 4, 2); corners inner-start, inner-end, outer-end, outer-start
    params: SpiralParams

    def __len__(self) -> int:
        return len(self.quads)

    def bounds(self) -> tuple[float, float, float, float]:
        corners = self.quads.reshape(-1, 2)
        return (
            float(corners[:, 0].min()),
            float(corners[:, 1].min()),
            float(corners[:, 0].max()),
            float(corners[:, 1].max()),
        )

    def to_debug_dict(self) -> dict:
        return {
            "a": self.params.a,
            "k": self.params.k,
            "t_step": self.params.resolved_t_step(),
            "clockwise": self.params.clockwise,
            "n_scanlines": len(self.quads),
            "baseline_points": self.baseline_points.tolist(),
            "quads": self.quads.tolist(),
        }


@dataclass
class OverlaySpec:
    """Extra drawing on top of the raw spiral, all in scanline-index space.

    fixation_colors and annotations paint arcs into the inter-arm gap
    (visible when a > 1); highlights draw colored borders around the quads
    of a span, as used for query results.
    """

    fixation_colors: list[tuple[int, int, Color]] = field(default_factory=list)
    highlights: list[tuple[int, int, Color]] = field(default_factory=list)
    annotations: list[tuple[int, int, str, Color]] = field(default_factory=list)

    def is_empty(self) -> bool:
        return not (self.fixation_colors or self.highlights or self.annotations)

    def validate(self, n_scanlines: int) -> None:
        spans = [s[:2] for s in self.fixation_colors + self.highlights]
        spans += [s[:2] for s in self.annotations]
        for start, end in spans:
            if not (0 <= start <= end < n_scanlines):
                raise ValueError(f"overlay span ({start}, {end}) out of bounds for {n_scanlines} scanlines")


def frame_span_to_scanline_span(start_frame: int, end_frame: int, stride: int) -> tuple[int, int] | None:
    """Map an inclusive frame span to the scanline indices it covers, or
    None when the stride skips the whole span."""
    first = -(-start_frame // stride)  # ceil
    last = end_frame // stride
    if first > last:
        return None
    return first, last


def spiral_point(t: float, a: float, k: float) -> tuple[float, float]:
    """Baseline position at parameter t (y axis is flipped later for
    clockwise rendering)."""
    if t < 0:
        raise ValueError("t must be non-negative")
    phi = t**k
    r = a * phi / (2.0 * math.pi)
    return (r * math.cos(phi), r * math.sin(phi))


def overlap_bound(k: float, n_scanlines: int) -> float:
    """Largest t_step keeping every per-scanline turn below pi/2, which is
    what keeps quads of one arm in disjoint angular sectors (for a >= 1)."""
    limit = math.pi / 2.0

    def max_turn(step: float) -> float:
        if k <= 1.0:
            return step**k  # first step turns the most
        t_end = n_scanlines * step
        return t_end**k - (t_end - step) ** k

    lo, hi = 0.0, 1.0
    while max_turn(hi) < limit:
        hi *= 2.0
    for _ in range(80):
        mid = (lo + hi) / 2.0
        if max_turn(mid) <= limit:
            lo = mid
        else:
            hi = mid
    return lo


def build_geometry(n_scanlines: int, params: SpiralParams) -> SpiralGeometry:
    """Baseline points at t = 0, t_step, ... and one quad per scanline.

    Quads run between consecutive baseline points and extend one unit along
    the outward vertex normal; sharing normals between neighboring quads
    makes the strip gap-free.
    """
    if n_scanlines < 1:
        raise ValueError("n_scanlines must be >= 1")
    step = params.resolved_t_step()
    t = np.arange(n_scanlines + 1, dtype=np.float64) * step
    phi = t**params.k
    r = params.a * phi / (2.0 * math.pi)
    points = np.stack([r * np.cos(phi), r * np.sin(phi)], axis=1)

    # Vertex tangents: central differences inside, one-sided at the ends.
    tangents = np.empty_like(points)
    tangents[1:-1] = points[2:] - points[:-2]
    tangents[0] = points[1] - points[0]
    tangents[-1] = points[-1] - points[-2]
    normals = np.stack([tangents[:, 1], -tangents[:, 0]], axis=1)
    lengths = np.linalg.norm(normals, axis=1)
    lengths[lengths == 0] = 1.0
    normals /= lengths[:, None]
    # Point away from the spiral center. The center point itself has no
    # radial direction; borrow its neighbor's.
    radial = points.copy()
    radial[0] = points[1]
    flip = np.einsum("ij,ij->i", normals, radial) < 0
    normals[flip] *= -1.0

    quads = np.empty((n_scanlines, 4, 2), dtype=np.float64)
    quads[:, 0] = points[:-1]
    quads[:, 1] = points[1:]
    quads[:, 2] = points[1:] + normals[1:]
    quads[:, 3] = points[:-1] + normals[:-1]
    return SpiralGeometry(baseline_points=points, quads=quads, params=params)


class _Canvas:
    """Pixel canvas with the world-to-pixel transform of one spiral."""

    def __init__(self, geometry: SpiralGeometry, margin_units: float = 2.0):
        params = geometry.params
        xmin, ymin, xmax, ymax = geometry.bounds()
        self.scale = float(params.h_px)
        self.x0 = xmin - margin_units
        self.y0 = ymin - margin_units
        self.flip_y = not params.clockwise
        width = int(math.ceil((xmax - xmin + 2 * margin_units) * self.scale))
        height = int(math.ceil((ymax - ymin + 2 * margin_units) * self.scale))
        self.height_px = max(height, 1)
        self.image = np.empty((self.height_px, max(width, 1), 3), dtype=np.uint8)
        self.image[:] = BACKGROUND

    def to_px(self, points: np.ndarray) -> np.ndarray:
        out = np.empty_like(points)
        out[..., 0] = (points[..., 0] - self.x0) * self.scale
        # flipping against the integer canvas height keeps the two
        # orientations exact pixel mirrors of each other
        if self.flip_y:
            out[..., 1] = self.height_px - (points[..., 1] - self.y0) * self.scale
        else:
            out[..., 1] = (points[..., 1] - self.y0) * self.scale
        return out


def _quad_uv(corners_px: np.ndarray, bbox) -> tuple[np.ndarray, np.ndarray, np.ndarray] | None:
    """Per-pixel (u, v) texture coordinates inside a quad.

    The quad is split along the c0-c2 diagonal; each triangle maps pixels
    affinely, which is exact on all edges shared with neighboring quads.
    Returns (mask, u, v) over the bbox grid or None for an empty bbox.
    """
    ix0, iy0, ix1, iy1 = bbox
    if ix1 <= ix0 or iy1 <= iy0:
        return None
    xs = np.arange(ix0, ix1, dtype=np.float64) + 0.5
    ys = np.arange(iy0, iy1, dtype=np.float64) + 0.5
    px = np.broadcast_to(xs[None, :], (len(ys), len(xs)))
    py = np.broadcast_to(ys[:, None], (len(ys), len(xs)))

    mask = np.zeros(px.shape, dtype=bool)
    u = np.zeros(px.shape, dtype=np.float64)
    v = np.zeros(px.shape, dtype=np.float64)
    uv = ((0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0))
    eps = 1e-9
    for ia, ib, ic in ((0, 1, 2), (0, 2, 3)):
        ax, ay = corners_px[ia]
        e1 = corners_px[ib] - corners_px[ia]
        e2 = corners_px[ic] - corners_px[ia]
        det = e1[0] * e2[1] - e1[1] * e2[0]
        if abs(det) < 1e-12:
            continue
        dx = px - ax
        dy = py - ay
        l1 = (dx * e2[1] - dy * e2[0]) / det
        l2 = (dy * e1[0] - dx * e1[1]) / det
        inside = (l1 >= -eps) & (l2 >= -eps) & (l1 + l2 <= 1.0 + eps) & ~mask
        if not inside.any():
            continue
        ua, va = uv[ia]
        du1, dv1 = uv[ib][0] - ua, uv[ib][1] - va
        du2, dv2 = uv[ic][0] - ua, uv[ic][1] - va
        u[inside] = ua + l1[inside] * du1 + l2[inside] * du2
        v[inside] = va + l1[inside] * dv1 + l2[inside] * dv2
        mask |= inside
    if not mask.any():
        return None
    return mask, u, v


def _quad_bbox(corners_px: np.ndarray, shape) -> tuple[int, int, int, int]:
    ix0 = max(int(math.floor(corners_px[:, 0].min())), 0)
    iy0 = max(int(math.floor(corners_px[:, 1].min())), 0)
    ix1 = min(int(math.ceil(corners_px[:, 0].max())) + 1, shape[1])
    iy1 = min(int(math.ceil(corners_px[:, 1].max())) + 1, shape[0])
    return ix0, iy0, ix1, iy1


def _paint_textured(canvas: _Canvas, corners_px: np.ndarray, column: np.ndarray) -> None:
    bbox = _quad_bbox(corners_px, canvas.image.shape)
    result = _quad_uv(corners_px, bbox)
    if result is None:
        return
    mask, _, v = result
    height = column.shape[0]
    rows = np.clip(np.rint(v[mask] * (height - 1)), 0, height - 1).astype(np.intp)
    region = canvas.image[bbox[1] : bbox[3], bbox[0] : bbox[2]]
    region[mask] = column[rows]


def _paint_solid(canvas: _Canvas, corners_px: np.ndarray, color: Color) -> None:
    bbox = _quad_bbox(corners_px, canvas.image.shape)
    result = _quad_uv(corners_px, bbox)
    if result is None:
        return
    mask, _, _ = result
    region = canvas.image[bbox[1] : bbox[3], bbox[0] : bbox[2]]
    region[mask] = color


def _bilinear(corners: np.ndarray, u: float, v: float) -> np.ndarray:
    c0, c1, c2, c3 = corners
    return (1 - u) * (1 - v) * c0 + u * (1 - v) * c1 + u * v * c2 + (1 - u) * v * c3


def _sub_quad(corners: np.ndarray, u0: float, u1: float, v0: float, v1: float) -> np.ndarray:
    return np.stack(
        [
            _bilinear(corners, u0, v0),
            _bilinear(corners, u1, v0),
            _bilinear(corners, u1, v1),
            _bilinear(corners, u0, v1),
        ]
    )


def _offset_quad(geometry: SpiralGeometry, index: int, v0: float, v1: float) -> np.ndarray:
    """Quad shifted along the vertex normals, in units beyond the baseline."""
    inner_start = geometry.baseline_points[index]
    inner_end = geometry.baseline_points[index + 1]
    normal_start = geometry.quads[index, 3] - inner_start
    normal_end = geometry.quads[index, 2] - inner_end
    return np.stack(
        [
            inner_start + v0 * normal_start,
            inner_end + v0 * normal_end,
            inner_end + v1 * normal_end,
            inner_start + v1 * normal_start,
        ]
    )


def _draw_disk(image: np.ndarray, cx: float, cy: float, radius: float, color: Color) -> None:
    h, w = image.shape[:2]
    ix0 = max(int(math.floor(cx - radius)), 0)
    iy0 = max(int(math.floor(cy - radius)), 0)
    ix1 = min(int(math.ceil(cx + radius)) + 1, w)
    iy1 = min(int(math.ceil(cy + radius)) + 1, h)
    if ix1 <= ix0 or iy1 <= iy0:
        return
    xs = np.arange(ix0, ix1, dtype=np.float64) + 0.5
    ys = np.arange(iy0, iy1, dtype=np.float64) + 0.5
    mask = (xs[None, :] - cx) ** 2 + (ys[:, None] - cy) ** 2 <= radius * radius
    image[iy0:iy1, ix0:ix1][mask] = color


def _border_spans(geometry: SpiralGeometry, canvas: _Canvas, start: int, end: int, color: Color) -> None:
    border_px = max(2, geometry.params.h_px // 12)
    bw = border_px / geometry.params.h_px
    for i in range(start, end + 1):
        corners = geometry.quads[i]
        strips = [
            _sub_quad(corners, 0.0, 1.0, 0.0, min(bw, 1.0)),
            _sub_quad(corners, 0.0, 1.0, max(1.0 - bw, 0.0), 1.0),
        ]
        seg_len = float(np.linalg.norm(corners[1] - corners[0]))
        uw = 1.0 if seg_len == 0 else min(bw / seg_len, 1.0)
        if i == start:
            strips.append(_sub_quad(corners, 0.0, uw, 0.0, 1.0))
        if i == end:
            strips.append(_sub_quad(corners, 1.0 - uw, 1.0, 0.0, 1.0))
        for strip in strips:
            _paint_solid(canvas, canvas.to_px(strip), color)


def render_spiral(
    seq: SlitscanSequence,
    params: SpiralParams,
    overlay: OverlaySpec | None = None,
    geometry: SpiralGeometry | None = None,
) -> np.ndarray:
    """Rasterize a slitscan sequence along the spiral, RGB uint8 output.

    Scanline columns are texture-mapped onto their quads with pixel row 0
    at the inner edge; painting follows temporal order, so later scanlines
    win where quads overlap (possible for a < 1).
    """
    if len(seq) == 0:
        raise ValueError("empty sequence")
    overlay = overlay or OverlaySpec()
    overlay.validate(len(seq))
    if geometry is None:
        geometry = build_geometry(len(seq), params)
    canvas = _Canvas(geometry)
    quads_px = canvas.to_px(geometry.quads)

    for i, scanline in enumerate(seq.scanlines):
        _paint_textured(canvas, quads_px[i], scanline.pixels)

    gap = params.a - 1.0
    if gap > 0:
        arcs = [(s, e, c) for s, e, c in overlay.fixation_colors]
        arcs += [(s, e, c) for s, e, _label, c in overlay.annotations]
        for s, e, color in arcs:
            for i in range(s, e + 1):
                band = _offset_quad(geometry, i, 1.0 + 0.15 * gap, 1.0 + 0.85 * gap)
                _paint_solid(canvas, canvas.to_px(band), color)
    else:
        for s, e, _label, color in overlay.annotations:
            _border_spans(geometry, canvas, s, e, color)

    for s, e, color in overlay.highlights:
        _border_spans(geometry, canvas, s, e, color)

    radius = max(2.0, params.h_px / 16.0)
    height = seq.height
    for i, scanline in enumerate(seq.scanlines):
        if scanline.gaze_marker_row is None:
            continue
        v = scanline.gaze_marker_row / (height - 1) if height > 1 else 0.5
        world = _bilinear(geometry.quads[i], 0.5, v)
        cx, cy = canvas.to_px(world[None, :])[0]
        _draw_disk(canvas.image, cx, cy, radius, (255, 0, 0))
        _draw_disk(canvas.image, cx, cy, max(1.0, radius / 2.0), (255, 255, 255))

    return canvas.image


def scale_to_square(image: np.ndarray, size_px: int) -> np.ndarray:
    """Uniformly scale an image into a size_px square on the background color."""
    from PIL import Image

    h, w = image.shape[:2]
    scale = size_px / max(h, w)
    new_w = max(1, int(round(w * scale)))
    new_h = max(1, int(round(h * scale)))
    resized = np.asarray(
        Image.fromarray(image).resize((new_w, new_h), Image.BILINEAR), dtype=np.uint8
    )
    out = np.empty((size_px, size_px, 3), dtype=np.uint8)
    out[:] = BACKGROUND
    top = (size_px - new_h) // 2
    left = (size_px - new_w) // 2
    out[top : top + new_h, left : left + new_w] = resized
    return out


def render_glyph(seq: SlitscanSequence, params: SpiralParams, glyph_px: int = DEFAULT_GLYPH_PX) -> np.ndarray:
    """Compact fixed-size spiral without overlays, for small-multiple use."""
    return scale_to_square(render_spiral(seq, params, OverlaySpec()), glyph_px)


def geometry_debug_json(geometry: SpiralGeometry) -> str:
    return json.dumps(geometry.to_debug_dict())


def export_svg(seq: SlitscanSequence, params: SpiralParams, path,
               geometry: SpiralGeometry | None = None) -> None:
    """Debug SVG: quad outlines plus each scanline embedded as a raster strip.

    Strips are mapped with the parallelogram spanned by the quad's inner
    edge and its starting normal, a close approximation of the raster
    path. Large sequences produce large files; meant for inspection.
    """
    from PIL import Image

    if geometry is None:
        geometry = build_geometry(len(seq), params)
    xmin, ymin, xmax, ymax = geometry.bounds()
    margin = 0.5
    flip = 1.0 if params.clockwise else -1.0
    view_y0 = (ymin - margin) if params.clockwise else -(ymax + margin)

    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" xmlns:xlink="http://www.w3.org/1999/xlink" '
        f'viewBox="{xmin - margin:.4f} {view_y0:.4f} {xmax - xmin + 2 * margin:.4f} '
        f'{ymax - ymin + 2 * margin:.4f}">',
    ]
    for i, scanline in enumerate(seq.scanlines):
        strip = scanline.pixels.reshape(-1, 1, 3)
        buf = io.BytesIO()
        Image.fromarray(strip).save(buf, format="PNG")
        uri = "data:image/png;base64," + base64.b64encode(buf.getvalue()).decode("ascii")
        origin = geometry.quads[i, 0]
        ex = geometry.quads[i, 1] - origin
        ey = geometry.quads[i, 3] - origin
        parts.append(
            f'<image xlink:href="{uri}" width="1" height="1" preserveAspectRatio="none" '
            f'transform="matrix({ex[0]:.6f} {flip * ex[1]:.6f} {ey[0]:.6f} {flip * ey[1]:.6f} '
            f'{origin[0]:.6f} {flip * origin[1]:.6f})"/>'
        )
    for quad in geometry.quads:
        coords = " ".join(f"{x:.4f},{flip * y:.4f}" for x, y in quad)
        parts.append(f'<polygon points="{coords}" fill="none" stroke="#888" stroke-width="0.01"/>')
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(parts))
