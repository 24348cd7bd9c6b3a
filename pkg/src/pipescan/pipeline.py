"""Whole-scan reconstruction: frames in, accumulated pipe map out."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np

from .errors import PipeScanError
from .geometry import CameraModel, StereoRig
from .mapping import PipeMap, accumulate_ring
from .odometry import WheelSpec, advance_odometry
from .profiling import ProfilerSettings, process_frame
from .scene import FrameBundle, PipeSpec, truth_radii

logger = logging.getLogger(__name__)


@dataclass
class ScanResult:
    pipe_map: PipeMap
    frames: int
    failures: list[tuple[int, str]] = field(default_factory=list)
    # per accepted ring, true wall radius (mm) under each measured point
    truth_mm: list[np.ndarray] = field(default_factory=list)

    @property
    def ring_fraction(self) -> float:
        return len(self.pipe_map) / self.frames if self.frames else 0.0


def reconstruct_scan(
    frames: Iterable[FrameBundle],
    rig: StereoRig,
    nominal_diameter: float,
    wheel: WheelSpec = WheelSpec(),
    settings: ProfilerSettings = ProfilerSettings(),
    rgb_cam: CameraModel | None = None,
    truth_pipe: PipeSpec | None = None,
) -> ScanResult:
    """Profile every frame pair and accumulate the rings by encoder odometry.

    Displacements are measured from the first frame's encoder count. A frame
    that fails (no ring found, odometry regression, ...) is logged and
    skipped. With ``truth_pipe`` the true radius under each measured point is
    recorded from the frame's ground-truth pose.
    """
    settings = replace(settings, nominal_diameter=nominal_diameter)
    pipe_map = PipeMap(nominal_diameter, wheel)
    result = ScanResult(pipe_map, 0)
    ticks0 = None
    for bundle in frames:
        result.frames += 1
        if ticks0 is None:
            ticks0 = bundle.encoder_ticks
        try:
            disp = advance_odometry(max(bundle.encoder_ticks - ticks0, 0), wheel)
            out = process_frame(
                bundle.left_ir, bundle.right_ir, rig, settings, bundle.index, disp,
                bundle.rgb if rgb_cam is not None else None, rgb_cam,
            )
            accumulate_ring(pipe_map, out.ring, disp)
        except PipeScanError as exc:
            result.failures.append((bundle.index, f"{type(exc).__name__}: {exc}"))
            logger.warning("frame %d: %s: %s", bundle.index, type(exc).__name__, exc)
            continue
        if truth_pipe is not None:
            result.truth_mm.append(1e3 * truth_radii(truth_pipe, bundle.pose_truth, out.ring.points))
    return result
