"""Stock rig and scenes.

The IR pair is a 1280x720 rectified rig with a wide 300 px focal length, so
a 300 mm bore seen at the default 0.15 m laser offset images as a ring of
about 300 px radius. The color camera sits between and slightly above the IR
cameras.
"""

from __future__ import annotations

import numpy as np

from .geometry import CameraIntrinsics, CameraModel, CameraPose, StereoRig
from .scene import DefectSpec, LaserPlane, PipeSpec, Scene, ScanPlan, WallTexture, corrosion_pits

IR_INTRINSICS = CameraIntrinsics(fx=300.0, fy=300.0, cx=640.0, cy=360.0, width=1280, height=720)
RGB_INTRINSICS = CameraIntrinsics(fx=200.0, fy=200.0, cx=320.0, cy=240.0, width=640, height=480)
DEFAULT_BASELINE = 0.08


def default_rig(baseline: float = DEFAULT_BASELINE) -> StereoRig:
    return StereoRig.from_intrinsics(IR_INTRINSICS, baseline)


def default_rgb_camera(baseline: float = DEFAULT_BASELINE) -> CameraModel:
    center = np.array([0.5 * baseline, -0.025, 0.0])
    return CameraModel(RGB_INTRINSICS, pose=CameraPose(np.eye(3), -center))


def plain_scene(diameter: float = 0.300, frames: int = 200) -> Scene:
    return Scene(pipe=PipeSpec(diameter, 1.0), scan=ScanPlan(frames=frames))


def table1_scene(frames: int = 200) -> Scene:
    """300 mm PVC pipe with a 3 mm and a 10 mm protrusion and a 3 mm hole."""
    defects = (
        DefectSpec("protrusion", 0.26, 0.0, 0.03, 0.35, 0.003),
        DefectSpec("protrusion", 0.34, np.pi, 0.03, 0.35, 0.010),
        DefectSpec("hole", 0.42, np.pi / 4, 0.03, 0.35, 0.003),
    )
    texture = WallTexture((170, 165, 150), ((np.pi / 2, 0.05, (200, 30, 30)),), (90, 60, 40))
    pipe = PipeSpec(0.300, 1.0, defects, texture)
    return Scene(pipe=pipe, scan=ScanPlan(start=0.05, spacing=0.0015, frames=frames))


CORRODED_BASELINE = 0.16


def corroded_scene(frames: int = 100) -> Scene:
    """600 mm metal pipe with scattered corrosion pits.

    A rig scaled with the bore (twice the baseline, twice the laser offset)
    keeps the imaged ring at the same pixel radius as the 300 mm case.
    """
    corrosion = {
        "count": 60,
        "start": 0.05,
        "end": 0.45,
        "depth": (0.5e-3, 4e-3),
        "size": (0.02, 0.06),
        "seed": 7,
    }
    pits = corrosion_pits(radius=0.3, **corrosion)
    pipe = PipeSpec(0.600, 1.0, pits, WallTexture((120, 95, 80), (), (150, 60, 20)))
    return Scene(
        pipe=pipe,
        laser=LaserPlane(offset=0.30),
        scan=ScanPlan(start=0.05, spacing=0.004, frames=frames),
        corrosion=corrosion,
    )
