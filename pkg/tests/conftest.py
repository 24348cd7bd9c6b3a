import numpy as np
import pytest

from pipescan import presets
from pipescan.scene import LaserPlane, NoiseParams, PipeSpec, centered_pose, simulate_frame
from pipescan.odometry import WheelSpec


@pytest.fixture(scope="session")
def rig():
    return presets.default_rig()


@pytest.fixture(scope="session")
def rgb_cam():
    return presets.default_rgb_camera()


def render_pair(pipe, rig, lateral=(0.0, 0.0), tilt=(0.0, 0.0), z=0.3, noise=None, seed=0, rgb_cam=None,
                plane=None):
    pose = centered_pose(z, rig.baseline, lateral, tilt)
    return simulate_frame(
        0, pipe, pose, rig, rgb_cam, plane or LaserPlane(), WheelSpec(),
        noise if noise is not None else NoiseParams.none(), seed,
    )


@pytest.fixture(scope="session")
def plain_pipe():
    return PipeSpec(0.300, 1.0)


@pytest.fixture(scope="session")
def noiseless_bundle(plain_pipe, rig):
    return render_pair(plain_pipe, rig)


@pytest.fixture(scope="session")
def noisy_bundle(plain_pipe, rig):
    return render_pair(plain_pipe, rig, noise=NoiseParams(), seed=3)


def circle_mask(shape, center, radius, width=1.0, gap=None):
    """Boolean ring of ``width`` px around a circle; ``gap`` = (start, end) rad removed."""
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w]
    d = np.hypot(xx - center[0], yy - center[1])
    ring = np.abs(d - radius) <= 0.5 * width + 0.25
    if gap is not None:
        a = np.mod(np.arctan2(yy - center[1], xx - center[0]), 2 * np.pi)
        ring &= ~((a >= gap[0]) & (a < gap[1]))
    return ring


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
