import numpy as np
import pytest

from viewpath.config import PlannerConfig
from viewpath.kinematics import default_arm
from viewpath.planner import BasePath
from viewpath.scene import SceneDescription, SceneObject, voxelize
from viewpath.visibility import CameraModel


def cube_scene(size=1.0, voxel_size=0.05):
    cube = SceneObject("cube", "box", {"size": np.full(3, size)}, [0.0, 0.0, size / 2.0])
    return SceneDescription([cube], [-2.5, -2.5, 0.0], [2.5, 2.5, 2.0], voxel_size, name="cube")


def line_path(N=5, v=0.35, T=1.0, y=-1.6, x0=-1.2):
    """Straight base path along +x passing south of the cube."""
    pts = [(x0 + k * v * T, y) for k in range(N)]
    return BasePath.from_polyline(pts, v, T, N=N, kind="straight")


@pytest.fixture(scope="session")
def arm():
    return default_arm()


@pytest.fixture(scope="session")
def cam():
    return CameraModel()


@pytest.fixture(scope="session")
def cube():
    scene = cube_scene()
    return scene, voxelize(scene)


@pytest.fixture(scope="session")
def small_config():
    return PlannerConfig(M=120, seed=0)


# one summary line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
