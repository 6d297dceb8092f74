"""Regenerate the checked-in golden spiral.

Run from the repository root after an intentional rendering change:

    python3 tests/regen_golden.py

The acceptance suite renders the same 100-frame synthetic recording with
the same configuration and compares pixels exactly.
"""
import json
import shutil
import sys
import tempfile
from pathlib import Path

GOLDEN_PATH = Path(__file__).parent / "golden" / "golden_spiral_100.png"

GOLDEN_CONFIG = {
    "slitscan": {"mode": "gaze-global", "height": 100, "stride": 1},
    "spiral": {"a": 1.2, "k": 0.9, "h_px": 50, "clockwise": True},
}


def build_golden_project(base_dir: Path) -> Path:
    """Project dir with the deterministic 100-frame recording; returns the
    config path."""
    from gazespiral.synthetic import procedural_recording, write_recording

    rec = procedural_recording("golden", n_frames=100)
    write_recording(rec, base_dir / "golden")
    config = dict(GOLDEN_CONFIG)
    config["recordings"] = ["golden/manifest.json"]
    config["output_dir"] = str(base_dir / "out")
    config_path = base_dir / "project.json"
    config_path.write_text(json.dumps(config, indent=2))
    return config_path


def main() -> int:
    from gazespiral.cli import main as cli_main

    with tempfile.TemporaryDirectory() as tmp:
        base = Path(tmp)
        config_path = build_golden_project(base)
        code = cli_main(["render", "--config", str(config_path), "--no-geometry"])
        if code != 0:
            print(f"render failed with exit code {code}", file=sys.stderr)
            return code
        GOLDEN_PATH.parent.mkdir(parents=True, exist_ok=True)
        shutil.copyfile(base / "out" / "golden_spiral.png", GOLDEN_PATH)
    print(f"wrote {GOLDEN_PATH}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
