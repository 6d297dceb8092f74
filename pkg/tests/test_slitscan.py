import numpy as np
import pytest

from gazespiral.ingest import GazeSample, data_quality
from gazespiral.slitscan import (
    SlitscanMode,
    extract_scanline,
    extract_sequence,
    load_sequence_cache,
    render_linear,
    save_sequence_cache,
)
from gazespiral.synthetic import make_recording, procedural_recording


def sample(x=0.5, y=0.5, valid=True):
    return GazeSample(0, 0, x, y, valid)


def ramp_frame(width=100, height=100):
    frame = np.zeros((height, width, 3), dtype=np.uint8)
    frame[:, :, 0] = np.linspace(0, 255, width)[None, :]
    frame[:, :, 1] = np.linspace(0, 255, height)[:, None]
    return frame


def test_static_center_ignores_gaze():
    frame = ramp_frame()
    a = extract_scanline(frame, sample(0.1, 0.1), SlitscanMode.static_center(), 100)
    b = extract_scanline(frame, sample(0.9, 0.9, valid=False), SlitscanMode.static_center(), 100)
    np.testing.assert_array_equal(a.pixels, b.pixels)
    np.testing.assert_array_equal(a.pixels, frame[:, 50, :])
    assert not a.is_missing and a.gaze_marker_row is None


def test_gaze_global_missing_is_black():
    scanline = extract_scanline(ramp_frame(), sample(valid=False), SlitscanMode.gaze_global(), 100)
    assert scanline.is_missing
    assert scanline.gaze_marker_row is None
    assert not scanline.pixels.any()


def test_gaze_global_boundary_column():
    frame = ramp_frame(width=100)
    scanline = extract_scanline(frame, sample(x=1.0), SlitscanMode.gaze_global(), 100)
    np.testing.assert_array_equal(scanline.pixels, frame[:, 99, :])


def test_gaze_global_marker_row():
    scanline = extract_scanline(ramp_frame(), sample(y=0.25), SlitscanMode.gaze_global(), 100)
    assert scanline.gaze_marker_row == round(0.25 * 99)


def test_identity_resample_when_heights_match():
    frame = ramp_frame(height=100)
    scanline = extract_scanline(frame, sample(x=0.5), SlitscanMode.gaze_global(), 100)
    np.testing.assert_array_equal(scanline.pixels, frame[:, 50, :])


def test_downsample_interpolates():
    frame = ramp_frame(height=100)
    scanline = extract_scanline(frame, sample(x=0.0), SlitscanMode.gaze_global(), 50)
    expected = np.rint(
        np.interp(np.linspace(0, 99, 50), np.arange(100), frame[:, 0, 1].astype(float))
    ).astype(np.uint8)
    np.testing.assert_array_equal(scanline.pixels[:, 1], expected)


def test_gaze_local_window_clamped_at_border():
    frame = ramp_frame(height=100)
    mode = SlitscanMode.gaze_local(10)
    top = extract_scanline(frame, sample(x=0.5, y=0.0), mode, 21)
    np.testing.assert_array_equal(top.pixels, frame[0:21, 50, :])
    bottom = extract_scanline(frame, sample(x=0.5, y=1.0), mode, 21)
    np.testing.assert_array_equal(bottom.pixels, frame[79:100, 50, :])


def test_gaze_local_missing_is_black():
    scanline = extract_scanline(ramp_frame(), sample(valid=False), SlitscanMode.gaze_local(10), 21)
    assert scanline.is_missing


def test_height_validation():
    with pytest.raises(ValueError):
        extract_scanline(ramp_frame(), sample(), SlitscanMode.gaze_global(), 0)
    with pytest.raises(ValueError, match="exceeds frame height"):
        extract_scanline(ramp_frame(height=50), sample(), SlitscanMode.gaze_global(), 100)


def test_mode_validation():
    with pytest.raises(ValueError):
        SlitscanMode("diagonal")
    with pytest.raises(ValueError):
        SlitscanMode.gaze_local(0)


@pytest.mark.parametrize("n,stride,expected", [(100, 1, 100), (100, 4, 25), (10, 3, 4)])
def test_sequence_counts(n, stride, expected):
    frames = np.zeros((n, 20, 20, 3), dtype=np.uint8)
    rec = make_recording("s", frames, [(0.5, 0.5, True)] * n, fps=25.0)
    seq = extract_sequence(rec, SlitscanMode.gaze_global(), height=20, stride=stride)
    assert len(seq) == expected
    assert seq.frame_indices == list(range(0, n, stride))


def test_stride_is_subsampling(procedural_rec):
    full = extract_sequence(procedural_rec, SlitscanMode.gaze_global(), height=100, stride=1)
    strided = extract_sequence(procedural_rec, SlitscanMode.gaze_global(), height=100, stride=4)
    assert len(strided) == -(-len(full) // 4)
    for i, scanline in enumerate(strided.scanlines):
        np.testing.assert_array_equal(scanline.pixels, full.scanlines[4 * i].pixels)
        assert scanline.is_missing == full.scanlines[4 * i].is_missing


def test_missing_fraction_equals_loss_fraction(procedural_rec):
    seq = extract_sequence(procedural_rec, SlitscanMode.gaze_global(), height=100, stride=1)
    report = data_quality(procedural_rec)
    assert seq.missing_mask().mean() == report.loss_fraction


def test_render_linear_shape(procedural_rec):
    seq = extract_sequence(procedural_rec, SlitscanMode.gaze_global(), height=100, stride=1)
    image = render_linear(seq)
    assert image.shape == (100, 100, 3)


def test_render_linear_all_invalid():
    frames = np.full((20, 30, 30, 3), 200, dtype=np.uint8)
    rec = make_recording("inv", frames, [(0.5, 0.5, False)] * 20, fps=25.0)
    seq = extract_sequence(rec, SlitscanMode.gaze_global(), height=30, stride=1)
    image = render_linear(seq)
    assert not image.any()


def test_render_linear_marker_drawn():
    frames = np.zeros((5, 30, 30, 3), dtype=np.uint8)
    rec = make_recording("m", frames, [(0.5, 0.5, True)] * 5, fps=25.0)
    seq = extract_sequence(rec, SlitscanMode.gaze_global(), height=30, stride=1)
    image = render_linear(seq)
    assert (image == (255, 255, 255)).all(axis=2).any()
    assert (image == (255, 0, 0)).all(axis=2).any()


def test_render_linear_box_filter_exact():
    # two equal-width column groups averaging to known values
    frames = np.zeros((4, 10, 10, 3), dtype=np.uint8)
    frames[0] = 10
    frames[1] = 30
    frames[2] = 100
    frames[3] = 200
    rec = make_recording("b", frames, [(0.5, 0.5, True)] * 4, fps=25.0)
    seq = extract_sequence(rec, SlitscanMode.static_center(), height=10, stride=1)
    image = render_linear(seq, max_width_px=2)
    assert image.shape == (10, 2, 3)
    assert np.all(image[:, 0, :] == 20)  # mean(10, 30)
    assert np.all(image[:, 1, :] == 150)  # mean(100, 200)


def test_render_deterministic(procedural_rec):
    seq = extract_sequence(procedural_rec, SlitscanMode.gaze_global(), height=100, stride=2)
    a = render_linear(seq)
    b = render_linear(seq)
    np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize("mode", [SlitscanMode.static_center(), SlitscanMode.gaze_global(),
                                  SlitscanMode.gaze_local(25)])
def test_cache_round_trip(tmp_path, procedural_rec, mode):
    seq = extract_sequence(procedural_rec, mode, height=60, stride=3)
    path = tmp_path / "seq.bin"
    save_sequence_cache(seq, path)
    loaded = load_sequence_cache(path)
    assert loaded.height == seq.height
    assert loaded.stride == seq.stride
    assert loaded.mode == seq.mode
    assert loaded.recording_id == seq.recording_id
    assert len(loaded) == len(seq)
    for a, b in zip(loaded.scanlines, seq.scanlines):
        np.testing.assert_array_equal(a.pixels, b.pixels)
        assert a.gaze_marker_row == b.gaze_marker_row
        assert a.is_missing == b.is_missing
