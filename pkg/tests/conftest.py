import json
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from gazespiral.synthetic import gallery_recording, procedural_recording, write_recording


@pytest.fixture(scope="session")
def procedural_rec():
    return procedural_recording()


@pytest.fixture(scope="session")
def gallery_pair():
    """One L and one R gallery walkthrough plus their frame-level AOI maps."""
    rec_l, aoi_l = gallery_recording("L01", "L", seed=11)
    rec_r, aoi_r = gallery_recording("R01", "R", seed=21)
    return (rec_l, aoi_l), (rec_r, aoi_r)


def build_project(tmp_path: Path, recordings, config_extra: dict | None = None) -> Path:
    """Write recordings + a project config; returns the config path."""
    manifest_names = []
    for rec in recordings:
        write_recording(rec, tmp_path / rec.id)
        manifest_names.append(f"{rec.id}/manifest.json")
    config = {
        "recordings": manifest_names,
        "output_dir": str(tmp_path / "out"),
    }
    if config_extra:
        config.update(config_extra)
    config_path = tmp_path / "project.json"
    config_path.write_text(json.dumps(config, indent=2))
    return config_path


@pytest.fixture
def flat_frames():
    """64 frames of a horizontal color ramp, handy for scanline checks."""
    width, height = 100, 100
    frame = np.zeros((height, width, 3), dtype=np.uint8)
    frame[:, :, 0] = np.linspace(0, 255, width)[None, :]
    frame[:, :, 1] = np.linspace(0, 255, height)[:, None]
    return np.repeat(frame[None, :, :, :], 64, axis=0)
