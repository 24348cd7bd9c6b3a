"""Stereo laser-ring pipe profiler with a synthetic scene simulator."""

from .errors import PipeScanError
from .geometry import CameraIntrinsics, CameraModel, CameraPose, StereoRig, triangulate_points
from .mapping import PipeMap, accumulate_ring, compute_heatmap, compute_rmse
from .mesh import build_mesh, export_ply
from .profiling import ProfilerSettings, RingProfile, process_frame
from .scene import PipeSpec, ScanPose, simulate_frame, simulate_scan

__version__ = "0.1.0"

__all__ = [
    "CameraIntrinsics",
    "CameraModel",
    "CameraPose",
    "PipeMap",
    "PipeScanError",
    "PipeSpec",
    "ProfilerSettings",
    "RingProfile",
    "ScanPose",
    "StereoRig",
    "accumulate_ring",
    "build_mesh",
    "compute_heatmap",
    "compute_rmse",
    "export_ply",
    "process_frame",
    "simulate_frame",
    "simulate_scan",
    "triangulate_points",
]
