"""Per-frame ring profiling: ray casting, stereo matching, triangulation,
colorization and tilt estimation.

All pixel arrays are ``(N, 2)`` as ``(x, y)``; 3D points are in the left IR
camera frame unless stated otherwise.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from .errors import DegenerateBaseline, DegenerateRing, RowOutOfImage, TooSparse
from .extraction import BinaryMask, RingCenter, detect_center, extract_mask
from .geometry import CameraModel, PixelPoint, Point3, StereoRig, project_points, triangulate_points

logger = logging.getLogger(__name__)

DEFAULT_RAYS = 3000
MIN_HIT_FRACTION = 0.5
RAY_HALF_WIDTH_PX = 0.75
CENTROID_HALF_WINDOW_PX = 2.5
MIN_ROW_COS = 0.25
MAX_ROW_SHIFT_PX = 1.5

FLAG_OUT_OF_FRAME = 1
SENTINEL_COLOR = (0, 0, 0)


# ---------------------------------------------------------------------------
# ray casting


class RayHit(NamedTuple):
    angle: float
    pixel: PixelPoint
    intensity: float


@dataclass(frozen=True, eq=False)
class RayHits(Sequence[RayHit]):
    """Ring crossings of the cast rays, in increasing ray order.

    Only rays that hit are stored; ``ray_index`` says which of the
    ``n_rays`` uniform angles each hit belongs to.
    """

    n_rays: int
    ray_index: np.ndarray
    pixels: np.ndarray
    intensity: np.ndarray
    center: RingCenter

    @property
    def angles(self) -> np.ndarray:
        return self.ray_index * (2 * np.pi / self.n_rays)

    @property
    def missing(self) -> np.ndarray:
        return np.setdiff1d(np.arange(self.n_rays), self.ray_index)

    def gap_runs(self) -> list[tuple[int, int]]:
        """Missing rays as ``(first, length)`` runs; a run may wrap past ray 0."""
        gone = np.zeros(self.n_rays, bool)
        gone[self.missing] = True
        if gone.all():
            return [(0, self.n_rays)]
        runs = []
        start = int(np.argmin(gone))  # rotate so we begin on a hit
        k = 0
        while k < self.n_rays:
            i = (start + k) % self.n_rays
            if gone[i]:
                length = 0
                while k < self.n_rays and gone[(start + k) % self.n_rays]:
                    length += 1
                    k += 1
                runs.append((i, length))
            else:
                k += 1
        return sorted(runs)

    def __len__(self) -> int:
        return len(self.ray_index)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        x, y = self.pixels[i]
        return RayHit(float(self.angles[i]), PixelPoint(float(x), float(y)), float(self.intensity[i]))

    def __iter__(self) -> Iterator[RayHit]:
        return (self[i] for i in range(len(self)))


def bilinear(image: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Bilinear samples of a 2D (or HxWxC) image; coordinates are clamped to the border."""
    h, w = image.shape[:2]
    x = np.clip(x, 0, w - 1)
    y = np.clip(y, 0, h - 1)
    x0 = np.minimum(np.floor(x).astype(np.intp), w - 2)
    y0 = np.minimum(np.floor(y).astype(np.intp), h - 2)
    fx, fy = x - x0, y - y0
    if image.ndim == 3:
        fx, fy = fx[..., None], fy[..., None]
    def at(yy, xx):
        return image[yy, xx].astype(np.float64)

    top = at(y0, x0) * (1 - fx) + at(y0, x0 + 1) * fx
    bot = at(y0 + 1, x0) * (1 - fx) + at(y0 + 1, x0 + 1) * fx
    return top * (1 - fy) + bot * fy


def background_level(image: np.ndarray) -> float:
    """Median intensity of a 4x-decimated copy; the laser covers a tiny share of
    the frame so this tracks the dark background."""
    return float(np.median(image[::4, ::4]))


def _first_crossings(mask, center, n_rays, r_lo, r_hi):
    """Smallest radius at which each ray meets a mask pixel, NaN for misses.

    A pixel blocks every ray passing within ``RAY_HALF_WIDTH_PX`` of its
    center, so rays cannot slip between diagonal neighbours.
    """
    ys, xs = mask.coords
    dx, dy = xs - center.cx, ys - center.cy
    rho = np.hypot(dx, dy)
    keep = (rho >= r_lo) & (rho <= r_hi)
    rho, theta = rho[keep], np.arctan2(dy[keep], dx[keep])
    step = 2 * np.pi / n_rays
    reach = np.arcsin(np.minimum(RAY_HALF_WIDTH_PX / rho, 1.0))
    k_lo = np.ceil((theta - reach) / step).astype(np.int64)
    k_hi = np.floor((theta + reach) / step).astype(np.int64)
    span = k_hi - k_lo + 1
    ok = span > 0
    k_lo, span, rho = k_lo[ok], span[ok], rho[ok]
    owner = np.repeat(np.arange(len(rho)), span)
    within = np.arange(len(owner)) - np.repeat(np.cumsum(span) - span, span)
    rays = (k_lo[owner] + within) % n_rays
    first = np.full(n_rays, np.inf)
    np.minimum.at(first, rays, rho[owner])
    first[~np.isfinite(first)] = np.nan
    return first


def _radial_centroid(image, center, angles, rho, background, iterations=3):
    offs = np.arange(-CENTROID_HALF_WINDOW_PX, CENTROID_HALF_WINDOW_PX + 1e-9, 0.5)
    c, s = np.cos(angles), np.sin(angles)
    valid = np.ones(len(rho), bool)
    for _ in range(iterations):
        r = rho[:, None] + offs
        vals = bilinear(image, center.cx + r * c[:, None], center.cy + r * s[:, None])
        wgt = np.maximum(vals - background, 0.0)
        total = wgt.sum(axis=1)
        valid &= total > 0
        with np.errstate(invalid="ignore", divide="ignore"):
            new = (wgt * r).sum(axis=1) / total
        rho = np.where(valid, new, rho)
    return rho, valid


def cast_rays(
    mask: BinaryMask,
    center: RingCenter,
    n_rays: int = DEFAULT_RAYS,
    image: np.ndarray | None = None,
    radius_range: tuple[float, float] = (0.6, 1.4),
    min_hit_fraction: float = MIN_HIT_FRACTION,
) -> RayHits:
    """Cast ``n_rays`` uniform rays outward from ``center`` and locate the
    first ridge crossing of each.

    The crossing is refined by an intensity-weighted centroid over a 5 px
    radial window of ``image`` (the mask itself when no image is given).
    Only radii within ``radius_range`` times ``center.r_est`` are searched.

    Raises:
        ValueError: ``n_rays`` < 4.
        TooSparse: fewer than ``min_hit_fraction`` of the rays hit.
    """
    if n_rays < 4:
        raise ValueError(f"n_rays must be >= 4, got {n_rays}")
    r_lo, r_hi = radius_range[0] * center.r_est, radius_range[1] * center.r_est
    first = _first_crossings(mask, center, n_rays, max(r_lo, 1.0), r_hi)
    idx = np.nonzero(np.isfinite(first))[0]
    angles = idx * (2 * np.pi / n_rays)
    if image is None:
        source, background = mask.bits.view(np.uint8), 0.0
    else:
        source, background = image, background_level(image)
    rho, valid = _radial_centroid(source, center, angles, first[idx], background)
    idx, rho, angles = idx[valid], rho[valid], angles[valid]
    if len(idx) < min_hit_fraction * n_rays:
        raise TooSparse(f"only {len(idx)} of {n_rays} rays hit the ring")
    px = np.column_stack([center.cx + rho * np.cos(angles), center.cy + rho * np.sin(angles)])
    intensity = bilinear(source, px[:, 0], px[:, 1])
    return RayHits(n_rays, idx, px, intensity, center)


# ---------------------------------------------------------------------------
# stereo matching


class Correspondence(NamedTuple):
    left: PixelPoint
    right: PixelPoint
    disparity: float


@dataclass(frozen=True, eq=False)
class MatchResult(Sequence[Correspondence]):
    """Matched hits plus counts of the hits that were dropped."""

    n_rays: int
    ray_index: np.ndarray
    left: np.ndarray
    right: np.ndarray
    no_peak: int = 0
    ill_conditioned: int = 0

    @property
    def angles(self) -> np.ndarray:
        return self.ray_index * (2 * np.pi / self.n_rays)

    @property
    def disparity(self) -> np.ndarray:
        return self.left[:, 0] - self.right[:, 0]

    def __len__(self) -> int:
        return len(self.ray_index)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        lx, ly = self.left[i]
        rx, ry = self.right[i]
        return Correspondence(PixelPoint(float(lx), float(ly)), PixelPoint(float(rx), float(ry)), float(lx - rx))

    def __iter__(self) -> Iterator[Correspondence]:
        return (self[i] for i in range(len(self)))


def _gaussian_offset(fm, f0, fp, floor):
    """Sub-pixel peak offset from three samples.

    A parabola through the log of the background-subtracted samples is exact
    for Gaussian line profiles; when a sample is at or below the background
    the plain intensity parabola is used instead.
    """
    a, b, c = fm - floor, f0 - floor, fp - floor
    use_log = (a > 0) & (b > 0) & (c > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        la, lb, lc = (np.log(np.where(use_log, v, 1.0)) for v in (a, b, c))
        den_log = la - 2 * lb + lc
        den_lin = fm - 2 * f0 + fp
        off = np.where(use_log, 0.5 * (la - lc) / den_log, 0.5 * (fm - fp) / den_lin)
        den = np.where(use_log, den_log, den_lin)
    off = np.where(den < 0, off, 0.0)
    return np.clip(np.nan_to_num(off), -0.5, 0.5)


def row_peaks(image: np.ndarray, split_x: float, background: float | None = None):
    """Brightest sub-pixel column of every row on each side of ``split_x``.

    Returns ``(x, value)`` arrays of shape ``(height, 2)``; column 0 is the
    side left of ``split_x``, column 1 the side right of it.
    """
    h, w = image.shape
    split = int(np.clip(math.ceil(split_x), 1, w - 1))
    if background is None:
        background = background_level(image)
    xs = np.empty((h, 2))
    vals = np.empty((h, 2))
    rows = np.arange(h)
    for side, (lo, hi) in enumerate(((0, split), (split, w))):
        col = lo + np.argmax(image[:, lo:hi], axis=1)
        f0 = image[rows, col].astype(np.float64)
        inner = (col > 0) & (col < w - 1)
        fm = image[rows, np.maximum(col - 1, 0)].astype(np.float64)
        fp = image[rows, np.minimum(col + 1, w - 1)].astype(np.float64)
        off = np.where(inner, _gaussian_offset(fm, f0, fp, background), 0.0)
        xs[:, side] = col + off
        vals[:, side] = f0
    return xs, vals


def match_stereo(
    hits: RayHits,
    right_image: np.ndarray,
    right_center: RingCenter,
    rig: StereoRig,
    min_peak: float | None = None,
    min_row_cos: float = MIN_ROW_COS,
    left_image: np.ndarray | None = None,
) -> MatchResult:
    """Find each left hit's match on its epipolar row of the right image.

    A row crosses the ring twice; the crossing on the same side of
    ``right_center`` as the hit is of the left center is taken. The match
    column is interpolated between the two image rows bracketing the hit.
    Hits whose ray is within ``acos(min_row_cos)`` of vertical cross the
    row almost tangentially and are skipped as ill-conditioned. Rows with no
    peak above ``min_peak`` (default: half the median hit intensity) count
    as ``no_peak``.

    With ``left_image`` the left column is re-estimated by the same row-wise
    peak fit used on the right, so that both sides of the disparity carry
    the same sub-pixel bias on oblique crossings. The radial hit is kept
    where the row peak lies more than ``MAX_ROW_SHIFT_PX`` away from it.

    Raises:
        NotRectified: the rig is not rectified.
        RowOutOfImage: a hit row falls outside the right sensor.
    """
    from .geometry import epipolar_row

    h, w = right_image.shape
    if len(hits) == 0:
        empty = np.empty((0, 2))
        return MatchResult(hits.n_rays, np.empty(0, np.int64), empty, empty)
    epipolar_row(PixelPoint(0.0, 0.0), rig)  # rectification check; rows map to themselves
    rows = hits.pixels[:, 1]
    if np.any(rows < 0) or np.any(rows > h - 1):
        raise RowOutOfImage(f"epipolar rows span [{rows.min():.1f}, {rows.max():.1f}], sensor has {h} rows")
    if min_peak is None:
        min_peak = 0.5 * float(np.median(hits.intensity))
    left_x = hits.pixels[:, 0]
    side = (left_x >= hits.center.cx).astype(np.intp)
    steep = np.abs(np.cos(hits.angles)) >= min_row_cos
    peaks_x, peaks_v = row_peaks(right_image, right_center.cx)
    y0 = np.minimum(np.floor(rows).astype(np.intp), h - 2)
    frac = rows - y0
    x0, x1 = peaks_x[y0, side], peaks_x[y0 + 1, side]
    ok0, ok1 = peaks_v[y0, side] >= min_peak, peaks_v[y0 + 1, side] >= min_peak
    xr = np.where(ok0 & ok1, x0 + frac * (x1 - x0), np.where(ok0, x0, x1))
    found = ok0 | ok1
    if left_image is not None:
        lx, lv = row_peaks(left_image, hits.center.cx)
        l0, l1 = lx[y0, side], lx[y0 + 1, side]
        good0, good1 = lv[y0, side] >= min_peak, lv[y0 + 1, side] >= min_peak
        row_x = np.where(good0 & good1, l0 + frac * (l1 - l0), np.where(good0, l0, l1))
        near = (good0 | good1) & (np.abs(row_x - left_x) <= MAX_ROW_SHIFT_PX)
        left_x = np.where(near, row_x, left_x)
    keep = steep & found
    disparity = left_x - xr
    keep &= disparity > 0
    right = np.column_stack([xr, rows])[keep]
    left = np.column_stack([left_x, rows])[keep]
    return MatchResult(
        hits.n_rays,
        hits.ray_index[keep],
        left,
        right,
        no_peak=int(np.count_nonzero(steep & ~found)),
        ill_conditioned=int(np.count_nonzero(~steep)),
    )


# ---------------------------------------------------------------------------
# ring geometry


class RingPoint(NamedTuple):
    angle: float
    point: Point3
    radius_mm: float
    color: tuple[int, int, int]
    deviation_mm: float | None


@dataclass(frozen=True, eq=False)
class RingProfile:
    """One triangulated laser ring. Angles are the image ray angles."""

    ring_index: int
    axial_position: float
    n_rays: int
    ray_index: np.ndarray
    points: np.ndarray
    radius_mm: np.ndarray
    center: np.ndarray
    colors: np.ndarray = field(default=None)
    flags: np.ndarray = field(default=None)
    deviation_mm: np.ndarray | None = None
    nominal_diameter: float | None = None

    def __post_init__(self):
        n = len(self.ray_index)
        if self.colors is None:
            object.__setattr__(self, "colors", np.tile(np.array(SENTINEL_COLOR, np.uint8), (n, 1)))
        if self.flags is None:
            object.__setattr__(self, "flags", np.zeros(n, np.uint8))

    @property
    def angles(self) -> np.ndarray:
        return self.ray_index * (2 * np.pi / self.n_rays)

    def __len__(self) -> int:
        return len(self.ray_index)

    def with_nominal(self, diameter: float) -> "RingProfile":
        """Bind the nominal diameter (m) and fill ``deviation_mm``."""
        return replace(self, nominal_diameter=diameter, deviation_mm=self.radius_mm - 500.0 * diameter)

    def records(self) -> list[RingPoint]:
        dev = self.deviation_mm
        return [
            RingPoint(
                float(a),
                Point3(*map(float, p)),
                float(r),
                tuple(int(v) for v in c),
                None if dev is None else float(dev[i]),
            )
            for i, (a, p, r, c) in enumerate(zip(self.angles, self.points, self.radius_mm, self.colors))
        ]


def fit_circle(xy: np.ndarray, iterations: int = 10) -> tuple[np.ndarray, float]:
    """Least-squares circle through 2D points: algebraic start, then Gauss-Newton
    on geometric distances."""
    a = np.column_stack([2 * xy, np.ones(len(xy))])
    b = np.sum(xy * xy, axis=1)
    sol, *_ = np.linalg.lstsq(a, b, rcond=None)
    c = sol[:2]
    r = math.sqrt(max(sol[2] + c @ c, 0.0))
    for _ in range(iterations):
        d = xy - c
        dist = np.hypot(d[:, 0], d[:, 1])
        jac = np.column_stack([-d / dist[:, None], -np.ones(len(xy))])
        step, *_ = np.linalg.lstsq(jac, -(dist - r), rcond=None)
        c = c + step[:2]
        r += step[2]
        if np.max(np.abs(step)) < 1e-12:
            break
    return c, r


def ring_axis_point(points: np.ndarray, trim_floor: float = 0.5e-3, rounds: int = 3) -> np.ndarray:
    """Center of the ring in the laser plane (camera z is the plane normal).

    Points whose residual exceeds ``max(3 * robust sigma, trim_floor)`` are
    dropped and the circle refit, so that local defects do not pull the
    center.
    """
    xy = points[:, :2]
    keep = np.ones(len(xy), bool)
    for _ in range(rounds):
        c, r = fit_circle(xy[keep])
        resid = np.abs(np.hypot(*(xy - c).T) - r)
        mad = np.median(np.abs(resid[keep] - np.median(resid[keep])))
        new = resid <= max(3 * 1.4826 * mad, trim_floor)
        if new.sum() < 3 or np.array_equal(new, keep):
            break
        keep = new
    return np.array([c[0], c[1], float(np.mean(points[:, 2]))])


def compute_ring(
    matches: MatchResult,
    rig: StereoRig,
    ring_index: int,
    axial_position: float,
    nominal_diameter: float | None = None,
) -> RingProfile:
    """Triangulate matched hits into a ring with per-point radii (mm).

    Raises:
        DegenerateRing: fewer than 3 matches, or the points are collinear.
    """
    if len(matches) < 3:
        raise DegenerateRing(f"need >= 3 correspondences, got {len(matches)}")
    pts = triangulate_points(matches.left, matches.right, rig)
    xy = pts[:, :2] - pts[:, :2].mean(axis=0)
    sv = np.linalg.svd(xy, compute_uv=False)
    if sv[0] == 0 or sv[1] / sv[0] < 1e-6:
        raise DegenerateRing("triangulated ring points are collinear")
    center = ring_axis_point(pts)
    radius_mm = 1e3 * np.hypot(pts[:, 0] - center[0], pts[:, 1] - center[1])
    ring = RingProfile(ring_index, axial_position, matches.n_rays, matches.ray_index.copy(), pts, radius_mm, center)
    return ring.with_nominal(nominal_diameter) if nominal_diameter else ring


# ---------------------------------------------------------------------------
# RGB mapping


def affine_rgb_projection(rgb_cam: CameraModel, depth: float) -> np.ndarray:
    """Scale/offset ``[[sx, 0, 0, cx], [0, sy, 0, cy]]`` for points at left-camera
    depth ``depth``.

    Linearizes the full camera model about the point on the plane ``z = depth``
    that images at the RGB principal point, so the two agree there exactly.
    """
    r, t = rgb_cam.pose.r, rgb_cam.pose.t
    # point on z = depth whose RGB-frame position lies on the optical axis
    a = np.array([[r[0, 0], r[0, 1]], [r[1, 0], r[1, 1]]])
    rhs = -(r[:2, 2] * depth + t[:2])
    xy = np.linalg.solve(a, rhs)
    p0 = np.array([xy[0], xy[1], depth])
    eps = 1e-4 * max(depth, 1e-3)
    base = project_points(p0[None], rgb_cam)[0]
    du = (project_points((p0 + [eps, 0, 0])[None], rgb_cam)[0] - base) / eps
    dv = (project_points((p0 + [0, eps, 0])[None], rgb_cam)[0] - base) / eps
    sx, sy = du[0], dv[1]
    return np.array([[sx, 0.0, 0.0, base[0] - sx * p0[0]], [0.0, sy, 0.0, base[1] - sy * p0[1]]])


def colorize_ring(
    ring: RingProfile,
    rgb: np.ndarray,
    rgb_cam: CameraModel,
    affine: np.ndarray | None = None,
) -> RingProfile:
    """Sample the RGB frame at each ring point's projection.

    Uses the full camera model, or the 2x4 ``affine`` map from
    :func:`affine_rgb_projection` when given. Points that land outside the
    frame (or behind the camera) keep :data:`SENTINEL_COLOR` and get
    :data:`FLAG_OUT_OF_FRAME`. Geometry is left untouched.
    """
    if affine is not None:
        px = ring.points @ affine[:, :3].T + affine[:, 3]
    else:
        px = project_points(ring.points, rgb_cam, check_depth=False)
    h, w = rgb.shape[:2]
    inside = np.isfinite(px).all(axis=1)
    inside &= (px[:, 0] >= 0) & (px[:, 0] <= w - 1) & (px[:, 1] >= 0) & (px[:, 1] <= h - 1)
    colors = np.tile(np.array(SENTINEL_COLOR, np.uint8), (len(ring), 1))
    if inside.any():
        sampled = bilinear(rgb, px[inside, 0], px[inside, 1])
        colors[inside] = np.clip(np.rint(sampled), 0, 255).astype(np.uint8)
    flags = np.where(inside, ring.flags & (0xFF ^ FLAG_OUT_OF_FRAME), ring.flags | FLAG_OUT_OF_FRAME).astype(np.uint8)
    return replace(ring, colors=colors, flags=flags)


# ---------------------------------------------------------------------------
# tilt


@dataclass(frozen=True)
class TiltEstimate:
    """Rig yaw and pitch (rad) from pairs of wall features at one axial station.

    ``basis`` holds the depths (m) of the features each angle came from.
    ``pitch`` is ``None`` when no vertical pair was supplied.
    """

    yaw: float
    pitch: float | None
    basis: tuple[float, ...]


MIN_FEATURE_SEPARATION_PX = 10.0


def _pair_angle(a, b, axis, rig, min_px):
    a, b = np.asarray(a, float), np.asarray(b, float)
    if a[axis] < b[axis]:
        a, b = b, a
    sep_px = rig.focal * abs(a[axis] / a[2] - b[axis] / b[2])
    if sep_px < min_px or a[axis] - b[axis] <= 0:
        raise DegenerateBaseline(f"features only {sep_px:.2f} px apart (need {min_px})")
    return math.atan((a[2] - b[2]) / (a[axis] - b[axis])), (float(a[2]), float(b[2]))


def estimate_tilt(
    feature_a: Sequence[float],
    feature_b: Sequence[float],
    rig: StereoRig,
    vertical: tuple[Sequence[float], Sequence[float]] | None = None,
    min_separation_px: float = MIN_FEATURE_SEPARATION_PX,
) -> TiltEstimate:
    """Yaw from two horizontally separated triangulated features, optionally
    pitch from a vertically separated pair.

    Features are 3D points in the left camera frame lying at the same axial
    station of the pipe. ``yaw = atan(depth difference / lateral
    separation)``, positive when the feature further to +x is deeper.
    Pitch uses the vertical pair the same way with the sign flipped, so
    positive pitch means the optical axis is raised.

    Raises:
        DegenerateBaseline: a pair is closer than ``min_separation_px`` in the
            left image.
    """
    yaw, depths = _pair_angle(feature_a, feature_b, 0, rig, min_separation_px)
    pitch = None
    if vertical is not None:
        angle, vdepths = _pair_angle(vertical[0], vertical[1], 1, rig, min_separation_px)
        pitch = -angle
        depths = depths + vdepths
    return TiltEstimate(yaw, pitch, depths)


# ---------------------------------------------------------------------------
# frame driver


STAGES = ("extract", "center", "rays", "match", "ring", "color")


@dataclass
class FrameResult:
    ring: RingProfile
    left_center: RingCenter
    right_center: RingCenter
    hits: RayHits
    matches: MatchResult
    timings_ms: dict[str, float]


@dataclass(frozen=True)
class ProfilerSettings:
    n_rays: int = DEFAULT_RAYS
    threshold: float | None = None
    r_min: float = 100.0
    r_max: float = 340.0
    min_row_cos: float = MIN_ROW_COS
    nominal_diameter: float | None = None


def _mask_mid_x(mask: BinaryMask) -> float:
    """Middle of the mask's horizontal extent, ignoring the outermost 0.5%
    of pixels on each side. A ring parallel to the image plane yields a
    circle in both views, so this tracks the center column."""
    lo, hi = np.percentile(mask.coords[1], [0.5, 99.5])
    return 0.5 * float(lo + hi)


def process_frame(
    left_ir: np.ndarray,
    right_ir: np.ndarray,
    rig: StereoRig,
    settings: ProfilerSettings = ProfilerSettings(),
    ring_index: int = 0,
    axial_position: float = 0.0,
    rgb: np.ndarray | None = None,
    rgb_cam: CameraModel | None = None,
) -> FrameResult:
    """Run mask extraction through ring triangulation (and colorization when
    an RGB frame is given) on one stereo pair, timing each stage."""
    timings = dict.fromkeys(STAGES, 0.0)
    clock = time.perf_counter

    t0 = clock()
    left_mask = extract_mask(left_ir, settings.threshold)
    right_mask = extract_mask(right_ir, settings.threshold)
    t1 = clock()
    lc = detect_center(left_mask, settings.r_min, settings.r_max)
    shift = _mask_mid_x(left_mask) - _mask_mid_x(right_mask)
    rc = detect_center(right_mask, settings.r_min, settings.r_max, guess=(lc.cx - shift, lc.cy))
    t2 = clock()
    hits = cast_rays(left_mask, lc, settings.n_rays, image=left_ir)
    t3 = clock()
    matches = match_stereo(hits, right_ir, rc, rig, min_row_cos=settings.min_row_cos, left_image=left_ir)
    t4 = clock()
    ring = compute_ring(matches, rig, ring_index, axial_position, settings.nominal_diameter)
    t5 = clock()
    if rgb is not None and rgb_cam is not None:
        ring = colorize_ring(ring, rgb, rgb_cam)
    t6 = clock()
    for name, (a, b) in zip(STAGES, ((t0, t1), (t1, t2), (t2, t3), (t3, t4), (t4, t5), (t5, t6))):
        timings[name] = 1e3 * (b - a)
    return FrameResult(ring, lc, rc, hits, matches, timings)
