"""Frame-rate measurement of the per-frame profiling pipeline."""

from __future__ import annotations

import gc
import itertools
import time
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .geometry import StereoRig
from .profiling import STAGES, ProfilerSettings, process_frame

MIN_FRAMES = 100
# Published rates for the 1000 / 3000 / 6000 points-per-frame settings.
REFERENCE_FPS = {1000: 60.0, 3000: 30.0, 6000: 10.0}


@dataclass(frozen=True)
class ThroughputReport:
    points_per_frame: int
    frames: int
    measured_fps: float
    latency_ms: float
    median_latency_ms: float
    latency_cv: float
    stage_ms: dict[str, float]
    mean_points: float

    @property
    def reference_fps(self) -> float | None:
        return REFERENCE_FPS.get(self.points_per_frame)


def measure_throughput(
    frames: Sequence[tuple[np.ndarray, np.ndarray]],
    rig: StereoRig,
    ray_settings: Iterable[int] = (1000, 3000, 6000),
    min_frames: int = MIN_FRAMES,
    warmup: int = 3,
    base: ProfilerSettings = ProfilerSettings(),
) -> list[ThroughputReport]:
    """Time :func:`process_frame` over ``frames`` (left, right IR pairs) at each
    ray count.

    The frame list is cycled until at least ``min_frames`` frames have run
    per setting. Settings are interleaved frame by frame so that slow drift
    in machine load affects them equally. Garbage collection is paused while
    timing. ``latency_cv`` is the coefficient of variation of per-frame
    latency.
    """
    if not frames:
        raise ValueError("measure_throughput needs at least one frame")
    settings = [replace(base, n_rays=int(n), nominal_diameter=None) for n in ray_settings]
    n_frames = max(min_frames, len(frames))
    for s in settings:
        for left, right in itertools.islice(itertools.cycle(frames), warmup):
            process_frame(left, right, rig, s)
    latencies = np.empty((len(settings), n_frames))
    stages = [dict.fromkeys(STAGES, 0.0) for _ in settings]
    points = [0] * len(settings)
    was_enabled = gc.isenabled()
    gc.disable()
    try:
        for k, (left, right) in enumerate(itertools.islice(itertools.cycle(frames), n_frames)):
            for j, s in enumerate(settings):
                t0 = time.perf_counter()
                result = process_frame(left, right, rig, s)
                latencies[j, k] = time.perf_counter() - t0
                for name, ms in result.timings_ms.items():
                    stages[j][name] += ms
                points[j] += len(result.ring)
    finally:
        if was_enabled:
            gc.enable()
    reports = []
    for j, s in enumerate(settings):
        lat = latencies[j]
        total = float(lat.sum())
        reports.append(
            ThroughputReport(
                points_per_frame=s.n_rays,
                frames=n_frames,
                measured_fps=n_frames / total,
                latency_ms=1e3 * total / n_frames,
                median_latency_ms=1e3 * float(np.median(lat)),
                latency_cv=float(lat.std() / lat.mean()),
                stage_ms={k: v / n_frames for k, v in stages[j].items()},
                mean_points=points[j] / n_frames,
            )
        )
    return reports


def latency_fit(reports: Sequence[ThroughputReport]) -> tuple[float, float, float]:
    """Least-squares line of median per-frame latency (ms) against points per
    frame.

    Returns ``(slope_ms_per_point, intercept_ms, r_squared)``.
    """
    x = np.array([r.points_per_frame for r in reports], float)
    y = np.array([r.median_latency_ms for r in reports], float)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def format_reports(reports: Sequence[ThroughputReport]) -> str:
    """Aligned text table, one row per setting."""
    head = ["points", "frames", "fps", "latency_ms", "median_ms", "reference_fps"] + [f"{s}_ms" for s in STAGES]
    rows = [head]
    for r in reports:
        ref = r.reference_fps
        rows.append(
            [str(r.points_per_frame), str(r.frames), f"{r.measured_fps:.2f}", f"{r.latency_ms:.2f}",
             f"{r.median_latency_ms:.2f}", "-" if ref is None else f"{ref:.0f}"]
            + [f"{r.stage_ms[s]:.2f}" for s in STAGES]
        )
    widths = [max(len(row[i]) for row in rows) for i in range(len(head))]
    return "\n".join("  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in rows) + "\n"
