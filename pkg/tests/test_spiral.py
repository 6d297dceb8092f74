import json
import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from gazespiral.slitscan import Scanline, SlitscanMode, SlitscanSequence, extract_sequence
from gazespiral.spiral import (
    OverlaySpec,
    SpiralParams,
    build_geometry,
    export_svg,
    frame_span_to_scanline_span,
    geometry_debug_json,
    overlap_bound,
    render_glyph,
    render_spiral,
    scale_to_square,
    spiral_point,
)
from gazespiral.synthetic import procedural_recording

YELLOW = (255, 215, 0)


def make_sequence(n, height=20, missing=(), markers=False, seed=0):
    rng = np.random.default_rng(seed)
    scanlines = []
    for i in range(n):
        if i in missing:
            scanlines.append(Scanline(np.zeros((height, 3), np.uint8), is_missing=True))
        else:
            pixels = rng.integers(0, 256, size=(height, 3), dtype=np.uint8)
            marker = int(rng.integers(0, height)) if markers else None
            scanlines.append(Scanline(pixels, gaze_marker_row=marker))
    return SlitscanSequence(scanlines, height, SlitscanMode.gaze_global(), 1, "synthetic")


def test_spiral_point_origin():
    assert spiral_point(0.0, 1.2, 1.0) == (0.0, 0.0)


def test_spiral_point_full_turn():
    x, y = spiral_point(2 * math.pi, 1.2, 1.0)
    assert x == pytest.approx(1.2, abs=1e-12)
    assert y == pytest.approx(0.0, abs=1e-12)


def test_spiral_point_half_turn():
    x, y = spiral_point(math.pi**2, 2.0, 0.5)
    assert x == pytest.approx(-1.0, abs=1e-12)
    assert y == pytest.approx(0.0, abs=1e-12)


def test_spiral_point_negative_t():
    with pytest.raises(ValueError):
        spiral_point(-0.1, 1.0, 1.0)


def test_spiral_point_matches_formula():
    rng = np.random.default_rng(5)
    for _ in range(200):
        t = float(rng.uniform(0, 500))
        a = float(rng.uniform(0.5, 3.0))
        k = float(rng.uniform(0.4, 1.5))
        x, y = spiral_point(t, a, k)
        phi = t**k
        r = a * phi / (2 * math.pi)
        assert x == pytest.approx(r * math.cos(phi), abs=1e-12)
        assert y == pytest.approx(r * math.sin(phi), abs=1e-12)


@pytest.mark.parametrize("k", [0.5, 0.8, 0.9, 1.0])
def test_arm_spacing_is_a(k):
    a = 1.3
    rng = np.random.default_rng(17)
    for _ in range(20):
        theta = float(rng.uniform(0, 2 * math.pi))
        radii = []
        for m in range(1, 5):
            phi = theta + 2 * math.pi * m
            t = phi ** (1.0 / k)
            x, y = spiral_point(t, a, k)
            radii.append(math.hypot(x, y))
        for r1, r2 in zip(radii, radii[1:]):
            assert r2 - r1 == pytest.approx(a, abs=1e-9)


def test_geometry_single_quad():
    geom = build_geometry(1, SpiralParams())
    assert geom.quads.shape == (1, 4, 2)
    assert geom.baseline_points.shape == (2, 2)
    np.testing.assert_allclose(geom.baseline_points[0], (0.0, 0.0))


def test_geometry_outermost_radius():
    params = SpiralParams(a=1.0, k=0.8, t_step=0.05)
    geom = build_geometry(1000, params)
    expected = 1.0 * (50**0.8) / (2 * math.pi)
    assert np.linalg.norm(geom.baseline_points[-1]) == pytest.approx(expected, rel=1e-12)


def test_geometry_radial_extent_bound():
    params = SpiralParams(a=1.2, k=0.9)
    geom = build_geometry(300, params)
    t_max = 300 * params.resolved_t_step()
    r_max = params.a * (t_max**params.k) / (2 * math.pi)
    corners = geom.quads.reshape(-1, 2)
    assert np.linalg.norm(corners, axis=1).max() <= r_max + 1.0 + 1e-9


def test_geometry_monotone_radius():
    geom = build_geometry(500, SpiralParams(a=1.0, k=0.7))
    radii = np.linalg.norm(geom.baseline_points, axis=1)
    assert np.all(np.diff(radii) >= -1e-12)


def test_geometry_quads_non_degenerate():
    geom = build_geometry(200, SpiralParams())
    for i in range(1, len(geom.quads)):
        quad = geom.quads[i]
        x, y = quad[:, 0], quad[:, 1]
        area = 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))
        assert area > 1e-6


def test_decreasing_k_compresses():
    for t in (1.5, 5.0, 40.0):
        assert t**0.8 < t**1.0


def test_default_t_step_gives_64_scanlines_per_inner_turn():
    for k in (0.5, 0.8, 1.0):
        step = SpiralParams(k=k).resolved_t_step()
        # 64 steps reach exactly one full turn
        assert (64 * step) ** k == pytest.approx(2 * math.pi, rel=1e-12)


def test_quads_disjoint_beyond_first_turn():
    # paper's a=1.2 setting: beyond the degenerate center region quads tile
    # the band without overlap (adjacent quads share an edge)
    from shapely.geometry import Polygon

    params = SpiralParams(a=1.2, k=1.0)
    assert params.resolved_t_step() < overlap_bound(1.0, 300)
    geom = build_geometry(300, params)
    polys = [Polygon(q) for q in geom.quads]
    for i in range(64, len(polys)):
        for j in range(i + 2, len(polys)):
            assert polys[i].intersection(polys[j]).area < 1e-9


def test_render_all_missing_black_quads():
    seq = make_sequence(80, missing=range(80))
    image = render_spiral(seq, SpiralParams(a=1.0, k=1.0, h_px=20))
    black = (image == 0).all(axis=2)
    white = (image == 255).all(axis=2)
    assert black.any()
    assert (black | white).all()


def test_render_highlight_span_location():
    seq = make_sequence(50)
    params = SpiralParams(a=1.0, k=1.0, h_px=30)
    overlay = OverlaySpec(highlights=[(10, 20, YELLOW)])
    image = render_spiral(seq, params, overlay)
    geom = build_geometry(50, params)

    from gazespiral.spiral import _Canvas

    canvas = _Canvas(geom)
    quads_px = canvas.to_px(geom.quads)
    yellow = np.argwhere((image == YELLOW).all(axis=2))
    assert len(yellow) > 0

    def bbox(indices, pad):
        pts = quads_px[list(indices)].reshape(-1, 2)
        return (
            pts[:, 0].min() - pad, pts[:, 1].min() - pad,
            pts[:, 0].max() + pad, pts[:, 1].max() + pad,
        )

    x0, y0, x1, y1 = bbox(range(9, 22), pad=2)
    assert np.all((yellow[:, 1] >= x0) & (yellow[:, 1] <= x1))
    assert np.all((yellow[:, 0] >= y0) & (yellow[:, 0] <= y1))
    for quad_index in (10, 15, 20):
        qx0, qy0, qx1, qy1 = bbox([quad_index], pad=2)
        inside = (
            (yellow[:, 1] >= qx0) & (yellow[:, 1] <= qx1)
            & (yellow[:, 0] >= qy0) & (yellow[:, 0] <= qy1)
        )
        assert inside.any()


def test_render_overlay_span_out_of_bounds():
    seq = make_sequence(10)
    with pytest.raises(ValueError, match="out of bounds"):
        render_spiral(seq, SpiralParams(h_px=20), OverlaySpec(highlights=[(5, 12, YELLOW)]))


def test_fixation_arcs_only_with_gap():
    seq = make_sequence(120)
    color = (10, 200, 10)
    overlay = OverlaySpec(fixation_colors=[(70, 90, color)])
    with_gap = render_spiral(seq, SpiralParams(a=1.2, h_px=20), overlay)
    assert (with_gap == color).all(axis=2).any()
    without_gap = render_spiral(seq, SpiralParams(a=1.0, h_px=20), overlay)
    assert not (without_gap == color).all(axis=2).any()


def test_render_deterministic():
    seq = make_sequence(60, markers=True, missing=(5, 6))
    params = SpiralParams(a=1.2, h_px=25)
    a = render_spiral(seq, params)
    b = render_spiral(seq, params)
    np.testing.assert_array_equal(a, b)


def test_render_markers_present():
    seq = make_sequence(40, markers=True, seed=2)
    image = render_spiral(seq, SpiralParams(h_px=40))
    assert (image == (255, 0, 0)).all(axis=2).any()


def test_clockwise_flag_mirrors():
    seq = make_sequence(50)
    cw = render_spiral(seq, SpiralParams(h_px=20, clockwise=True))
    ccw = render_spiral(seq, SpiralParams(h_px=20, clockwise=False))
    assert cw.shape == ccw.shape
    np.testing.assert_array_equal(cw, ccw[::-1, :, :])


def test_glyph_fixed_size():
    for n in (30, 200):
        seq = make_sequence(n)
        glyph = render_glyph(seq, SpiralParams(h_px=20))
        assert glyph.shape == (256, 256, 3)
        assert (glyph != 255).any()


def test_glyph_equals_scaled_spiral():
    from PIL import Image

    seq = make_sequence(70, seed=4)
    params = SpiralParams(a=1.0, k=0.9, h_px=24)
    glyph = render_glyph(seq, params, glyph_px=256)
    spiral = render_spiral(seq, params, OverlaySpec())
    # reference scaling, written out independently of scale_to_square
    h, w = spiral.shape[:2]
    scale = 256 / max(h, w)
    new_w, new_h = max(1, round(w * scale)), max(1, round(h * scale))
    resized = np.asarray(Image.fromarray(spiral).resize((new_w, new_h), Image.BILINEAR))
    expected = np.full((256, 256, 3), 255, dtype=np.uint8)
    top, left = (256 - new_h) // 2, (256 - new_w) // 2
    expected[top : top + new_h, left : left + new_w] = resized
    np.testing.assert_array_equal(glyph, expected)


def test_scale_to_square_range():
    image = np.zeros((10, 40, 3), dtype=np.uint8)
    out = scale_to_square(image, 64)
    assert out.shape == (64, 64, 3)


def test_frame_span_to_scanline_span():
    assert frame_span_to_scanline_span(0, 9, 1) == (0, 9)
    assert frame_span_to_scanline_span(5, 11, 4) == (2, 2)
    assert frame_span_to_scanline_span(5, 7, 4) is None


def test_geometry_debug_json(procedural_rec):
    seq = extract_sequence(procedural_rec, SlitscanMode.gaze_global(), height=50, stride=4)
    geom = build_geometry(len(seq), SpiralParams(h_px=50, stride=4))
    doc = json.loads(geometry_debug_json(geom))
    assert doc["n_scanlines"] == len(seq) == 25
    assert len(doc["quads"]) == 25
    assert len(doc["baseline_points"]) == 26
    assert doc["a"] == 1.0 and doc["clockwise"] is True


def test_svg_export(tmp_path):
    seq = make_sequence(12)
    path = tmp_path / "spiral.svg"
    export_svg(seq, SpiralParams(h_px=20), path)
    root = ET.parse(path).getroot()
    ns = "{http://www.w3.org/2000/svg}"
    assert len(root.findall(f"{ns}polygon")) == 12
    assert len(root.findall(f"{ns}image")) == 12
