"""Pipe map accumulation, ovality heat map, defect regions and accuracy metrics.

World frame: the left camera frame at zero odometry, translated along its
optical axis by the encoder displacement of each ring.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import ndimage

from .errors import AngularMismatch, NonMonotoneOdometry
from .odometry import WheelSpec
from .profiling import RingProfile

logger = logging.getLogger(__name__)

DEFECT_THRESHOLD_MM = 2.0
SLIP_TOLERANCE_TICKS = 2


@dataclass(frozen=True, eq=False)
class MappedRing:
    profile: RingProfile
    displacement: float

    @property
    def world_points(self) -> np.ndarray:
        return self.profile.points + np.array([0.0, 0.0, self.displacement])

    @property
    def world_z(self) -> float:
        return self.displacement + float(self.profile.center[2])


@dataclass(frozen=True)
class DefectRegion:
    """Contiguous patch of the wall deviating beyond the detection threshold.

    ``sign`` is +1 for material loss (radius above nominal) and -1 for
    protrusions into the bore. ``peak_deviation_mm`` is signed.
    """

    sign: int
    peak_deviation_mm: float
    axial_range: tuple[float, float]
    angular_range: tuple[float, float]
    ring_range: tuple[int, int]
    cells: int

    @property
    def magnitude_mm(self) -> float:
        return abs(self.peak_deviation_mm)


@dataclass
class PipeMap:
    """Ordered rings with odometry displacements.

    Rings whose displacement regresses by more than ``slip_tolerance_ticks``
    encoder pulses are rejected; smaller regressions are clamped to the
    previous displacement.
    """

    nominal_diameter: float
    wheel: WheelSpec = field(default_factory=WheelSpec)
    slip_tolerance_ticks: int = SLIP_TOLERANCE_TICKS
    rings: list[MappedRing] = field(default_factory=list)
    defect_regions: list[DefectRegion] = field(default_factory=list)
    rejected: int = 0

    @property
    def slip_tolerance(self) -> float:
        return self.slip_tolerance_ticks * self.wheel.meters_per_tick

    def __len__(self) -> int:
        return len(self.rings)

    def snapshot(self) -> "PipeMap":
        return PipeMap(
            self.nominal_diameter,
            self.wheel,
            self.slip_tolerance_ticks,
            list(self.rings),
            list(self.defect_regions),
            self.rejected,
        )

    def axial_positions(self) -> np.ndarray:
        return np.array([r.displacement for r in self.rings])

    def cloud(self) -> tuple[np.ndarray, np.ndarray]:
        """All world points ``(N, 3)`` and their RGB colors ``(N, 3)``."""
        if not self.rings:
            return np.empty((0, 3)), np.empty((0, 3), np.uint8)
        pts = np.concatenate([r.world_points for r in self.rings])
        cols = np.concatenate([r.profile.colors for r in self.rings])
        return pts, cols


def accumulate_ring(pipe_map: PipeMap, ring: RingProfile, displacement: float) -> PipeMap:
    """Append ``ring`` at odometry ``displacement`` (m) and return the map.

    The ring gets the map's nominal diameter bound if it has none.

    Raises:
        NonMonotoneOdometry: displacement is below the previous ring's by more
            than the slip tolerance. The ring is not added.
    """
    if pipe_map.rings:
        prev = pipe_map.rings[-1].displacement
        if displacement < prev - pipe_map.slip_tolerance - 1e-12:
            pipe_map.rejected += 1
            raise NonMonotoneOdometry(
                f"ring {ring.ring_index}: displacement {displacement:.6f} m regresses "
                f"{prev - displacement:.6f} m behind the previous ring"
            )
        displacement = max(displacement, prev)
    if ring.deviation_mm is None or ring.nominal_diameter != pipe_map.nominal_diameter:
        ring = ring.with_nominal(pipe_map.nominal_diameter)
    pipe_map.rings.append(MappedRing(ring, float(displacement)))
    return pipe_map


# ---------------------------------------------------------------------------
# heat map and defect regions


@dataclass(frozen=True)
class HeatMapStyle:
    """|deviation| buckets (mm) and their colors; bucket 0 is the base surface."""

    edges_mm: tuple[float, ...] = (1.0, 3.0, 6.0, 10.0)
    colors: tuple[tuple[int, int, int], ...] = (
        (200, 200, 200),
        (255, 190, 190),
        (255, 130, 130),
        (230, 60, 60),
        (170, 0, 0),
    )

    def __post_init__(self):
        if len(self.colors) != len(self.edges_mm) + 1:
            raise ValueError("need one more color than bucket edge")
        if any(b <= a for a, b in zip(self.edges_mm, self.edges_mm[1:])):
            raise ValueError("bucket edges must be strictly increasing")

    def bucket(self, deviation_mm) -> np.ndarray:
        return np.searchsorted(np.asarray(self.edges_mm), np.abs(deviation_mm), side="right")

    def color(self, deviation_mm) -> np.ndarray:
        return np.asarray(self.colors, np.uint8)[self.bucket(deviation_mm)]


@dataclass
class HeatMap:
    """Per-ring point colors plus the smoothed deviation grid behind them."""

    colors: list[np.ndarray]
    grid_mm: np.ndarray
    regions: list[DefectRegion]


def deviation_grid(pipe_map: PipeMap) -> tuple[np.ndarray, np.ndarray]:
    """``(rings, n_rays)`` deviation array (NaN where a ray missed) and the hit mask.

    Raises:
        AngularMismatch: rings use different ray counts.
    """
    n_rays = {r.profile.n_rays for r in pipe_map.rings}
    if len(n_rays) > 1:
        raise AngularMismatch(f"rings sampled with different ray counts: {sorted(n_rays)}")
    n = n_rays.pop() if n_rays else 0
    grid = np.full((len(pipe_map.rings), n), np.nan)
    for i, r in enumerate(pipe_map.rings):
        grid[i, r.profile.ray_index] = r.profile.deviation_mm
    return grid, np.isfinite(grid)


SMOOTH_RINGS = 3
SMOOTH_ARC = 0.06


def smooth_deviation(grid: np.ndarray, rings: int = SMOOTH_RINGS, arc: float = SMOOTH_ARC) -> np.ndarray:
    """Median filter over ``rings`` rings and an ``arc`` (rad) of rays, wrapping
    in angle; unseen cells count as 0."""
    filled = np.where(np.isfinite(grid), grid, 0.0)
    if filled.size == 0:
        return filled
    span = max(3, int(round(arc * filled.shape[1] / (2 * np.pi))) | 1)
    size = (rings, span)
    pad = min(size[1] // 2, filled.shape[1])
    wide = np.concatenate([filled[:, filled.shape[1] - pad :], filled, filled[:, :pad]], axis=1)
    out = ndimage.median_filter(wide, size=size, mode="nearest")
    return out[:, pad : pad + filled.shape[1]]


def _label_wrapped(mask: np.ndarray) -> tuple[np.ndarray, int]:
    """8-connected labels where the first and last columns are neighbours."""
    labels, n = ndimage.label(mask, structure=np.ones((3, 3), int))
    if n == 0 or mask.shape[1] < 2:
        return labels, n
    parent = np.arange(n + 1)

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    first, last = labels[:, 0], labels[:, -1]
    rows = mask.shape[0]
    for i in range(rows):
        if not first[i]:
            continue
        for j in (i - 1, i, i + 1):
            if 0 <= j < rows and last[j]:
                ra, rb = find(first[i]), find(last[j])
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)
    roots = np.array([find(a) for a in range(n + 1)])
    _, relabel = np.unique(roots, return_inverse=True)
    return relabel[labels], int(relabel.max())


def _angular_range(cols: np.ndarray, n_rays: int) -> tuple[float, float]:
    """Smallest arc covering the occupied ray columns, as (start, end) rad.

    ``start`` is in ``[0, 2 pi)``; ``end`` passes ``2 pi`` when the arc wraps.
    """
    occupied = np.zeros(n_rays, bool)
    occupied[cols] = True
    if occupied.all():
        return 0.0, 2 * np.pi
    # the arc starts just after the longest empty run
    empty = ~occupied
    doubled = np.concatenate([empty, empty])
    best_len, best_end, run = 0, 0, 0
    for k, e in enumerate(doubled):
        run = run + 1 if e else 0
        if run > best_len:
            best_len, best_end = run, k
    start = (best_end + 1) % n_rays
    span = n_rays - min(best_len, n_rays)
    step = 2 * np.pi / n_rays
    return start * step, (start + span - 1) * step


def find_defect_regions(
    pipe_map: PipeMap,
    threshold_mm: float = DEFECT_THRESHOLD_MM,
    min_cells: int = 6,
    smoothed: np.ndarray | None = None,
) -> list[DefectRegion]:
    """Group contiguous smoothed-deviation cells beyond ``threshold_mm``, per sign."""
    if not pipe_map.rings:
        return []
    if smoothed is None:
        smoothed = smooth_deviation(deviation_grid(pipe_map)[0])
    n_rays = smoothed.shape[1]
    axial = np.array([r.world_z for r in pipe_map.rings])
    regions = []
    for sign in (1, -1):
        labels, n = _label_wrapped(sign * smoothed >= threshold_mm)
        for lab in range(1, n + 1):
            rows, cols = np.nonzero(labels == lab)
            if len(rows) < min_cells:
                continue
            vals = smoothed[rows, cols]
            k = int(np.argmax(np.abs(vals)))
            regions.append(
                DefectRegion(
                    sign=sign,
                    peak_deviation_mm=float(vals[k]),
                    axial_range=(float(axial[rows.min()]), float(axial[rows.max()])),
                    angular_range=_angular_range(np.unique(cols), n_rays),
                    ring_range=(int(rows.min()), int(rows.max())),
                    cells=int(len(rows)),
                )
            )
    regions.sort(key=lambda r: (r.ring_range[0], r.angular_range[0]))
    return regions


def compute_heatmap(
    pipe_map: PipeMap,
    style: HeatMapStyle = HeatMapStyle(),
    threshold_mm: float = DEFECT_THRESHOLD_MM,
) -> HeatMap:
    """Color every map point by its smoothed |deviation| and refresh
    ``pipe_map.defect_regions``."""
    grid, _ = deviation_grid(pipe_map)
    smoothed = smooth_deviation(grid)
    colors = [style.color(smoothed[i, r.profile.ray_index]) for i, r in enumerate(pipe_map.rings)]
    regions = find_defect_regions(pipe_map, threshold_mm, smoothed=smoothed)
    pipe_map.defect_regions = regions
    return HeatMap(colors, smoothed, regions)


# ---------------------------------------------------------------------------
# accuracy


@dataclass(frozen=True)
class RmseReport:
    axial_positions: np.ndarray
    per_ring_mm: np.ndarray
    global_mm: float
    excluded_points: int


def defect_exclusion_mask(pipe_map: PipeMap, margin: tuple[int, int] = (2, 10)) -> np.ndarray:
    """Grid cells inside (dilated) defect regions, shape ``(rings, n_rays)``."""
    grid, _ = deviation_grid(pipe_map)
    out = np.zeros(grid.shape, bool)
    if grid.size == 0:
        return out
    smoothed = smooth_deviation(grid)
    for region in pipe_map.defect_regions:
        out |= region.sign * smoothed >= DEFECT_THRESHOLD_MM
    if out.any():
        structure = np.ones((2 * margin[0] + 1, 2 * margin[1] + 1), bool)
        wide = np.concatenate([out[:, -margin[1] :], out, out[:, : margin[1]]], axis=1)
        wide = ndimage.binary_dilation(wide, structure)
        out = wide[:, margin[1] : margin[1] + grid.shape[1]]
    return out


def compute_rmse(
    pipe_map: PipeMap,
    reference: str | Sequence[np.ndarray] | Callable[[MappedRing], np.ndarray] = "nominal",
) -> RmseReport:
    """Per-ring radial RMSE (mm) and their mean.

    ``reference`` is ``"nominal"`` (half the nominal diameter; points in
    detected defect regions are left out), a sequence of per-ring reference
    radii in mm aligned with each ring's points, or a callable returning
    them for a :class:`MappedRing`.
    """
    if not pipe_map.rings:
        raise ValueError("compute_rmse needs a non-empty map")
    excluded = 0
    skip = None
    if isinstance(reference, str):
        if reference != "nominal":
            raise ValueError(f"unknown reference {reference!r}")
        if pipe_map.defect_regions:
            skip = defect_exclusion_mask(pipe_map)
    per_ring = np.empty(len(pipe_map.rings))
    for i, ring in enumerate(pipe_map.rings):
        radii = ring.profile.radius_mm
        if isinstance(reference, str):
            ref = np.full(len(radii), 500.0 * pipe_map.nominal_diameter)
        elif callable(reference):
            ref = np.asarray(reference(ring), float)
        else:
            ref = np.asarray(reference[i], float)
        keep = np.ones(len(radii), bool)
        if skip is not None:
            keep = ~skip[i, ring.profile.ray_index]
            excluded += int(np.count_nonzero(~keep))
        resid = radii[keep] - ref[keep]
        per_ring[i] = np.sqrt(np.mean(resid**2)) if len(resid) else np.nan
    return RmseReport(pipe_map.axial_positions(), per_ring, float(np.nanmean(per_ring)), excluded)


def ring_diameters(ring: RingProfile, harmonics: int = 2, samples: int = 720) -> tuple[float, float]:
    """Smallest and largest diameter (mm) of a ring.

    Radius is fit as a Fourier series in the in-plane angle about the ring
    center; the diameter across angle ``a`` is ``r(a) + r(a + pi)``, in which
    only the even harmonics survive. The default keeps the ovality term only.
    Rows are weighted by ``|cos|`` of the ray angle, the inverse of how
    row-wise stereo matching scales the radial noise.
    """
    d = ring.points[:, :2] - ring.center[:2]
    ang = np.arctan2(d[:, 1], d[:, 0])
    cols = [np.ones_like(ang)]
    for k in range(1, harmonics + 1):
        cols += [np.cos(k * ang), np.sin(k * ang)]
    w = np.maximum(np.abs(np.cos(ring.angles)), 1e-3)
    coef, *_ = np.linalg.lstsq(np.column_stack(cols) * w[:, None], ring.radius_mm * w, rcond=None)
    grid = np.linspace(0, np.pi, samples, endpoint=False)
    diam = np.full_like(grid, 2 * coef[0])
    for k in range(2, harmonics + 1, 2):
        diam += 2 * (coef[2 * k - 1] * np.cos(k * grid) + coef[2 * k] * np.sin(k * grid))
    return float(diam.min()), float(diam.max())
