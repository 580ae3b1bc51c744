import math

import pytest
from PIL import Image

from grasp_refinery.geometry import GraspPose

# filled in by tests/test_acceptance.py; rendered after the run ends
ACCEPTANCE_RESULTS: dict[str, bool] = {}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok in ACCEPTANCE_RESULTS.items():
        terminalreporter.write_line(f"{name}: {'PASS' if ok else 'FAIL'}")

# image_id -> (width, height, [pose, ...]); shared hand-written fixture corpus
SCENES = {
    "scene_0001": (
        120,
        90,
        [
            GraspPose(40.0, 30.0, 0.25, 32.0, 12.0),
            GraspPose(70.5, 55.25, -1.1, 24.0, 10.0),
        ],
    ),
    "scene_0002": (
        200,
        150,
        [GraspPose(100.0, 75.0, math.pi / 2, 48.0, 16.0)],
    ),
    "scene_0003": (
        64,
        64,
        [
            GraspPose(20.0, 20.0, 0.0, 18.0, 8.0),
            GraspPose(44.0, 44.0, 0.7, 20.0, 9.0),
            GraspPose(32.0, 10.0, -0.4, 16.0, 7.0),
        ],
    ),
}


def write_png(path, width, height, color=(40, 40, 40)):
    Image.new("RGB", (width, height), color).save(path)


def grasp_line(pose: GraspPose) -> str:
    """Serialize a pose the way annotation files store it: degrees, semicolons."""
    return "%.6f;%.6f;%.6f;%.6f;%.6f" % (
        pose.center_x,
        pose.center_y,
        math.degrees(pose.angle),
        pose.opening,
        pose.jaw_size,
    )


def build_scene_dir(root, scenes=None):
    """Materialize a dataset directory of <id>_RGB.png plus <id>_grasps.txt."""
    scenes = SCENES if scenes is None else scenes
    root.mkdir(parents=True, exist_ok=True)
    for image_id, (width, height, poses) in scenes.items():
        write_png(root / f"{image_id}_RGB.png", width, height)
        content = "".join(grasp_line(p) + "\n" for p in poses)
        (root / f"{image_id}_grasps.txt").write_text(content)
    return root


@pytest.fixture
def scene_dir(tmp_path):
    return build_scene_dir(tmp_path / "dataset")
