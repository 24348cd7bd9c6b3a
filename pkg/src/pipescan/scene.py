"""Synthetic pipe scenes used as ground truth.

The pipe frame has its ``z`` axis along the pipe centerline, ``x`` to the
right and ``y`` down; the angular position around the wall is
``phi = atan2(y, x)``. A :class:`ScanPose` places the *left* IR camera in
that frame. The laser plane is rigid with the rig, perpendicular to the left
optical axis at ``LaserPlane.offset`` meters in front of the left camera.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterator, Sequence

import numpy as np
from scipy.ndimage import gaussian_filter1d
from scipy.spatial import cKDTree

from . import kvconfig
from .errors import ConfigError, OutOfBore
from .geometry import CameraModel, StereoRig, pixels_to_rays, project_points, rotation_x, rotation_y
from .odometry import WheelSpec, encoder_ticks

DEFECT_KINDS = ("protrusion", "hole", "ovality-patch")


def wrap_angle(a):
    """Wrap angles into ``[-pi, pi)``."""
    return (np.asarray(a) + np.pi) % (2 * np.pi) - np.pi


def _raised_cosine(u):
    u = np.abs(u)
    return np.where(u < 1.0, 0.5 * (1.0 + np.cos(np.pi * np.minimum(u, 1.0))), 0.0)


@dataclass(frozen=True)
class DefectSpec:
    """A planted wall defect.

    ``axial_extent`` and ``angular_extent`` are full footprint widths. The
    radial change tapers from ``magnitude`` at the center to zero at the
    footprint edge with a raised cosine. Protrusions move the wall toward the
    axis, holes away from it. An ovality patch blends the cross-section into
    an ellipse whose major semi-axis (``R + magnitude``) points at
    ``angular_center``; it spans the full circumference.
    """

    kind: str
    axial_center: float
    angular_center: float
    axial_extent: float
    angular_extent: float
    magnitude: float

    def __post_init__(self):
        if self.kind not in DEFECT_KINDS:
            raise ConfigError(f"unknown defect kind {self.kind!r}, expected one of {DEFECT_KINDS}")
        if not (self.axial_extent > 0 and self.angular_extent > 0):
            raise ConfigError("defect extents must be positive")
        if self.magnitude == 0:
            raise ConfigError("defect magnitude must be non-zero")

    def deviation(self, z, phi, radius: float):
        """Radial deviation (m) at pipe positions ``z`` (m), ``phi`` (rad)."""
        z, phi = np.broadcast_arrays(np.asarray(z, dtype=float), np.asarray(phi, dtype=float))
        out = np.zeros(z.shape)
        uz = (z - self.axial_center) / (0.5 * self.axial_extent)
        band = np.abs(uz) < 1.0
        if not np.any(band):
            return out
        wa = _raised_cosine(uz[band])
        dphi = wrap_angle(phi[band] - self.angular_center)
        if self.kind == "ovality-patch":
            a, b = radius + self.magnitude, radius - self.magnitude
            ellipse = a * b / np.sqrt((b * np.cos(dphi)) ** 2 + (a * np.sin(dphi)) ** 2)
            out[band] = wa * (ellipse - radius)
            return out
        wr = _raised_cosine(dphi / (0.5 * self.angular_extent))
        sign = -1.0 if self.kind == "protrusion" else 1.0
        out[band] = sign * self.magnitude * wa * wr
        return out

    def footprint(self, z, phi):
        """True where ``(z, phi)`` lies inside the defect footprint."""
        inside_z = np.abs(np.asarray(z) - self.axial_center) < 0.5 * self.axial_extent
        if self.kind == "ovality-patch":
            return inside_z & np.ones(np.shape(phi), dtype=bool)
        inside_phi = np.abs(wrap_angle(np.asarray(phi) - self.angular_center)) < 0.5 * self.angular_extent
        return inside_z & inside_phi


@dataclass(frozen=True)
class WallTexture:
    """Procedural wall color.

    ``stripes`` holds ``(angle, half_width, (r, g, b))`` axial stripes.
    ``defect_tint`` blends toward a color in proportion to local defect depth.
    """

    base: tuple[int, int, int] = (150, 150, 150)
    stripes: tuple = ()
    defect_tint: tuple[int, int, int] | None = None

    def __call__(self, z, phi, relative_deviation=None) -> np.ndarray:
        phi = np.asarray(phi, dtype=float)
        out = np.empty(phi.shape + (3,))
        out[...] = self.base
        for angle, half_width, color in self.stripes:
            inside = np.abs(wrap_angle(phi - angle)) <= half_width
            out[inside] = color
        if self.defect_tint is not None and relative_deviation is not None:
            w = np.clip(np.abs(relative_deviation), 0.0, 1.0)[..., None]
            out = (1 - w) * out + w * np.asarray(self.defect_tint, dtype=float)
        return out


@dataclass(frozen=True)
class PipeSpec:
    nominal_diameter: float = 0.300
    length: float = 1.0
    defects: tuple[DefectSpec, ...] = ()
    wall_texture: WallTexture = field(default_factory=WallTexture)

    def __post_init__(self):
        object.__setattr__(self, "defects", tuple(self.defects))
        if not self.nominal_diameter > 0:
            raise ConfigError(f"pipe diameter must be positive, got {self.nominal_diameter}")
        if not self.length > 0:
            raise ConfigError(f"pipe length must be positive, got {self.length}")
        for d in self.defects:
            if not 0 <= d.axial_center <= self.length:
                raise ConfigError(f"defect at z={d.axial_center} lies outside the pipe [0, {self.length}]")
            if abs(d.magnitude) >= self.radius:
                raise ConfigError(f"defect magnitude {d.magnitude} exceeds the pipe radius")

    @property
    def radius(self) -> float:
        return 0.5 * self.nominal_diameter

    def deviation_at(self, z, phi) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        phi = np.asarray(phi, dtype=float)
        dev = np.zeros(np.broadcast(z, phi).shape)
        for d in self.defects:
            dev = dev + d.deviation(z, phi, self.radius)
        return dev

    def radius_at(self, z, phi) -> np.ndarray:
        return self.radius + self.deviation_at(z, phi)

    def in_footprint(self, z, phi) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        phi = np.asarray(phi, dtype=float)
        out = np.zeros(np.broadcast(z, phi).shape, dtype=bool)
        for d in self.defects:
            out |= d.footprint(z, phi)
        return out

    def color_at(self, z, phi) -> np.ndarray:
        scale = max((abs(d.magnitude) for d in self.defects), default=1.0)
        return self.wall_texture(z, phi, self.deviation_at(z, phi) / scale)


@dataclass(frozen=True)
class LaserPlane:
    """Ring laser mounted on the rig.

    ``line_sigma`` is the Gaussian cross-section of the imaged line in pixels;
    it may be a callable of the wall angle ``phi``.
    """

    offset: float = 0.15
    power: float = 1.0
    line_sigma: float | Callable = 1.2
    attenuation: float = 0.2

    def __post_init__(self):
        if not self.offset > 0:
            raise ConfigError(f"laser plane offset must be positive, got {self.offset}")

    def sigma_for(self, phi) -> np.ndarray:
        if callable(self.line_sigma):
            return np.asarray(self.line_sigma(phi), dtype=float)
        return np.full(np.shape(phi), float(self.line_sigma))


@dataclass(frozen=True)
class NoiseParams:
    """IR sensor noise. ``jitter_px`` is the RMS displacement of the imaged
    line center along its normal, correlated over ``jitter_corr_px`` of arc."""

    pixel_sigma: float = 2.0
    jitter_px: float = 0.3
    jitter_corr_px: float = 2.0
    background: float = 8.0

    @classmethod
    def none(cls) -> "NoiseParams":
        return cls(pixel_sigma=0.0, jitter_px=0.0)

    @property
    def is_noiseless(self) -> bool:
        return self.pixel_sigma == 0 and self.jitter_px == 0


@dataclass(frozen=True)
class ScanPose:
    """Left IR camera placement in the pipe frame.

    ``lateral_offset`` is the (x, y) position of the left camera center
    relative to the pipe axis; ``tilt`` is (pitch, yaw). Positive yaw turns
    the optical axis toward +x, positive pitch toward -y (up).
    """

    axial_position: float
    lateral_offset: tuple[float, float] = (0.0, 0.0)
    tilt: tuple[float, float] = (0.0, 0.0)

    @property
    def rotation(self) -> np.ndarray:
        """Camera-to-pipe rotation."""
        pitch, yaw = self.tilt
        return rotation_y(yaw) @ rotation_x(pitch)

    @property
    def center(self) -> np.ndarray:
        return np.array([self.lateral_offset[0], self.lateral_offset[1], self.axial_position])

    def camera_to_pipe(self, points) -> np.ndarray:
        return np.asarray(points, dtype=float) @ self.rotation.T + self.center

    def pipe_to_camera(self, points) -> np.ndarray:
        return (np.asarray(points, dtype=float) - self.center) @ self.rotation


@dataclass
class RingTruth:
    """Analytic laser ring: wall angles, camera-frame points, radii (m)."""

    angles: np.ndarray
    points: np.ndarray
    pipe_points: np.ndarray
    radii: np.ndarray

    def __len__(self):
        return len(self.angles)

    def as_list(self):
        return list(zip(self.angles.tolist(), map(tuple, self.points.tolist()), self.radii.tolist()))


def _check_bore(pipe: PipeSpec, pose: ScanPose, centers_cam: Sequence[np.ndarray] = ()):
    centers = [pose.center] + [pose.camera_to_pipe(c) for c in centers_cam]
    for c in centers:
        rho = math.hypot(c[0], c[1])
        wall = float(pipe.radius_at(c[2], math.atan2(c[1], c[0])))
        if rho >= wall:
            raise OutOfBore(f"camera at radial distance {rho:.4f} m is outside the bore ({wall:.4f} m)")


def ring_ground_truth(pipe: PipeSpec, pose: ScanPose, plane: LaserPlane, n_samples: int = 3600) -> RingTruth:
    """Intersect the laser plane with the pipe wall at ``n_samples`` uniform wall angles.

    Raises:
        OutOfBore: the camera is outside the bore or the ring leaves the pipe.
    """
    _check_bore(pipe, pose)
    normal = pose.rotation[:, 2]
    if normal[2] < 1e-3:
        raise OutOfBore("laser plane does not cross the pipe axis")
    p0 = pose.center + plane.offset * normal
    phi = np.arange(n_samples) * (2 * np.pi / n_samples)
    c, s = np.cos(phi), np.sin(phi)
    lateral = normal[0] * c + normal[1] * s
    rhs = normal @ p0
    z = np.full(n_samples, p0[2])
    for _ in range(100):
        r = pipe.radius_at(z, phi)
        z_new = (rhs - r * lateral) / normal[2]
        done = np.max(np.abs(z_new - z)) < 1e-14
        z = z_new
        if done:
            break
    r = pipe.radius_at(z, phi)
    if np.any(z < 0) or np.any(z > pipe.length):
        raise OutOfBore("laser ring falls outside the pipe length")
    pipe_pts = np.column_stack([r * c, r * s, z])
    return RingTruth(phi, pose.pipe_to_camera(pipe_pts), pipe_pts, r)


def truth_radii(pipe: PipeSpec, pose: ScanPose, points_cam: np.ndarray) -> np.ndarray:
    """True wall radius (m) at the wall angle and axial station of measured points."""
    p = pose.camera_to_pipe(points_cam)
    return pipe.radius_at(p[:, 2], np.arctan2(p[:, 1], p[:, 0]))


def truth_footprint(pipe: PipeSpec, pose: ScanPose, points_cam: np.ndarray) -> np.ndarray:
    p = pose.camera_to_pipe(points_cam)
    return pipe.in_footprint(p[:, 2], np.arctan2(p[:, 1], p[:, 0]))


# ---------------------------------------------------------------------------
# rendering


def rasterize_line(
    curve: np.ndarray,
    shape: tuple[int, int],
    sigma=1.2,
    peak=255.0,
    closed: bool = True,
    reach: float = 4.0,
) -> np.ndarray:
    """Render a polyline as a ridge with a Gaussian cross-section.

    Each pixel within ``reach * sigma`` of the curve gets
    ``peak * exp(-d^2 / (2 sigma^2))`` where ``d`` is its exact distance to
    the polyline; ``sigma`` and ``peak`` may vary per vertex and are
    interpolated along segments. Returns a float image.
    """
    import cv2

    h, w = shape
    curve = np.asarray(curve, dtype=float)
    n = len(curve)
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), (n,))
    peak = np.broadcast_to(np.asarray(peak, dtype=float), (n,))
    img = np.zeros(shape, dtype=np.float32)
    finite = np.all(np.isfinite(curve), axis=1)
    if n < 2 or not np.any(finite):
        return img
    k = int(math.ceil(reach * float(np.max(sigma)))) + 1
    margin = k + 1
    keep = finite & (curve[:, 0] > -margin) & (curve[:, 0] < w + margin)
    keep &= (curve[:, 1] > -margin) & (curve[:, 1] < h + margin)
    if not np.any(keep):
        return img
    seeds = np.zeros(shape, dtype=np.uint8)
    ij = np.rint(curve[keep]).astype(int)
    seeds[np.clip(ij[:, 1], 0, h - 1), np.clip(ij[:, 0], 0, w - 1)] = 1
    band = cv2.dilate(seeds, np.ones((2 * k + 1, 2 * k + 1), np.uint8))
    ys, xs = np.nonzero(band)
    pix = np.column_stack([xs, ys]).astype(float)

    valid_idx = np.nonzero(finite)[0]
    tree = cKDTree(curve[valid_idx])
    _, nearest = tree.query(pix)
    nearest = valid_idx[nearest]

    best_d2 = np.full(len(pix), np.inf)
    best_val = np.zeros(len(pix))
    for step in (-1, 1):
        other = nearest + step
        if closed:
            other %= n
        ok = (other >= 0) & (other < n)
        other = np.clip(other, 0, n - 1)
        ok &= finite[other]
        a, b = curve[nearest], curve[other]
        ab = b - a
        denom = np.einsum("ij,ij->i", ab, ab)
        t = np.where(denom > 0, np.einsum("ij,ij->i", pix - a, ab) / np.where(denom > 0, denom, 1), 0.0)
        t = np.where(ok, np.clip(t, 0.0, 1.0), 0.0)
        foot = a + t[:, None] * ab
        d2 = np.sum((pix - foot) ** 2, axis=1)
        sg = sigma[nearest] + t * (sigma[other] - sigma[nearest])
        pk = peak[nearest] + t * (peak[other] - peak[nearest])
        val = pk * np.exp(-d2 / (2 * sg * sg))
        better = d2 < best_d2
        best_d2 = np.where(better, d2, best_d2)
        best_val = np.where(better, val, best_val)
    img[ys, xs] = best_val
    return img


def _curve_normals(curve: np.ndarray) -> np.ndarray:
    tangent = np.roll(curve, -1, axis=0) - np.roll(curve, 1, axis=0)
    tangent /= np.linalg.norm(tangent, axis=1, keepdims=True)
    return np.column_stack([-tangent[:, 1], tangent[:, 0]])


def _smooth_jitter(n: int, spacing_px: float, noise: NoiseParams, rng: np.random.Generator) -> np.ndarray:
    white = rng.standard_normal(n)
    sig = noise.jitter_corr_px / max(spacing_px, 1e-9)
    field_ = gaussian_filter1d(white, sig, mode="wrap") if sig > 0.5 else white
    return noise.jitter_px * field_ / np.std(field_)


RENDER_SAMPLES = 8192


def render_ir_frame(
    pipe: PipeSpec,
    pose: ScanPose,
    plane: LaserPlane,
    cam: CameraModel,
    noise: NoiseParams | None = None,
    rng: np.random.Generator | None = None,
    ring: RingTruth | None = None,
) -> np.ndarray:
    """Render the laser ring as seen by an IR camera of the rig.

    ``cam`` is expressed in the rig (left camera) frame. Returns an 8-bit
    grayscale image.
    """
    noise = noise or NoiseParams()
    rng = rng or np.random.default_rng(0)
    h, w = cam.height, cam.width
    img = np.full((h, w), noise.background, dtype=np.float32)
    if plane.power > 0:
        ring = ring or ring_ground_truth(pipe, pose, plane, RENDER_SAMPLES)
        curve = project_points(ring.points, cam)
        if noise.jitter_px > 0:
            spacing = float(np.mean(np.linalg.norm(np.diff(curve, axis=0), axis=1)))
            curve = curve + _curve_normals(curve) * _smooth_jitter(len(curve), spacing, noise, rng)[:, None]
        wall_normal = np.column_stack([np.cos(ring.angles), np.sin(ring.angles), np.zeros(len(ring))])
        wall_normal = wall_normal @ pose.rotation
        view = ring.points - cam.pose.center
        cos_inc = np.abs(np.einsum("ij,ij->i", wall_normal, view)) / np.linalg.norm(view, axis=1)
        peak = 255.0 * plane.power * (1.0 - plane.attenuation * (1.0 - cos_inc))
        sigma = plane.sigma_for(ring.angles)
        line = rasterize_line(curve, (h, w), sigma, peak - noise.background)
        img += line
    if noise.pixel_sigma > 0:
        img += noise.pixel_sigma * rng.standard_normal((h, w), dtype=np.float32)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


@functools.lru_cache(maxsize=8)
def _pixel_rays(cam: CameraModel) -> np.ndarray:
    v, u = np.mgrid[0 : cam.height, 0 : cam.width]
    px = np.column_stack([u.ravel(), v.ravel()]).astype(float)
    xy = pixels_to_rays(px, cam)
    rays = np.column_stack([xy, np.ones(len(xy))])
    rays.setflags(write=False)
    return rays


def render_rgb_frame(pipe: PipeSpec, pose: ScanPose, cam: CameraModel) -> np.ndarray:
    """Render the wall texture seen by the color camera (laser is filtered out).

    ``cam`` is expressed in the rig (left IR camera) frame. Pixels whose ray
    leaves the pipe length are black.
    """
    h, w = cam.height, cam.width
    d_cam = _pixel_rays(cam)
    rot = pose.rotation @ cam.pose.r.T
    d = d_cam @ rot.T
    o = pose.camera_to_pipe(cam.pose.center)
    a = d[:, 0] ** 2 + d[:, 1] ** 2
    b = 2 * (o[0] * d[:, 0] + o[1] * d[:, 1])
    c0 = o[0] ** 2 + o[1] ** 2
    radius = np.full(len(d), pipe.radius)
    with np.errstate(divide="ignore", invalid="ignore"):
        for _ in range(3):
            t = (-b + np.sqrt(b * b - 4 * a * (c0 - radius**2))) / (2 * a)
            hit = o + t[:, None] * d
            z, phi = hit[:, 2], np.arctan2(hit[:, 1], hit[:, 0])
            radius = pipe.radius_at(np.where(np.isfinite(z), z, -1.0), phi)
    valid = np.isfinite(t) & (t > 0) & (z >= 0) & (z <= pipe.length)
    out = np.zeros((len(d), 3))
    out[valid] = pipe.color_at(z[valid], phi[valid])
    return np.clip(np.rint(out), 0, 255).astype(np.uint8).reshape(h, w, 3)


# ---------------------------------------------------------------------------
# scans


@dataclass
class FrameBundle:
    index: int
    left_ir: np.ndarray
    right_ir: np.ndarray
    rgb: np.ndarray | None
    pose_truth: ScanPose
    ring_truth: RingTruth
    encoder_ticks: int


def frame_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


def simulate_frame(
    index: int,
    pipe: PipeSpec,
    pose: ScanPose,
    rig: StereoRig,
    rgb_cam: CameraModel | None,
    plane: LaserPlane,
    wheel: WheelSpec,
    noise: NoiseParams,
    seed: int = 0,
    truth_samples: int = 3600,
) -> FrameBundle:
    _check_bore(pipe, pose, [rig.right.pose.center])
    rng = frame_rng(seed, index)
    ring = ring_ground_truth(pipe, pose, plane, RENDER_SAMPLES)
    left = render_ir_frame(pipe, pose, plane, rig.left, noise, rng, ring)
    right = render_ir_frame(pipe, pose, plane, rig.right, noise, rng, ring)
    rgb = render_rgb_frame(pipe, pose, rgb_cam) if rgb_cam is not None else None
    truth = ring_ground_truth(pipe, pose, plane, truth_samples)
    return FrameBundle(index, left, right, rgb, pose, truth, encoder_ticks(pose.axial_position, wheel))


def simulate_scan(
    pipe: PipeSpec,
    trajectory: Sequence[ScanPose],
    rig: StereoRig,
    rgb_cam: CameraModel | None,
    plane: LaserPlane,
    encoder: WheelSpec | None = None,
    noise: NoiseParams | None = None,
    seed: int = 0,
    truth_samples: int = 3600,
) -> Iterator[FrameBundle]:
    """Yield one :class:`FrameBundle` per trajectory pose, in order.

    Frame ``i`` draws its noise from ``SeedSequence([seed, i])`` so any
    subset of frames can be re-rendered identically.

    Raises:
        ValueError: axial positions are not strictly increasing.
        OutOfBore: a pose leaves the bore.
    """
    encoder = encoder or WheelSpec()
    noise = noise if noise is not None else NoiseParams()
    axial = [p.axial_position for p in trajectory]
    if any(b <= a for a, b in zip(axial, axial[1:])):
        raise ValueError("trajectory axial positions must be strictly increasing")
    for i, pose in enumerate(trajectory):
        yield simulate_frame(i, pipe, pose, rig, rgb_cam, plane, encoder, noise, seed, truth_samples)


def centered_pose(
    axial_position: float,
    baseline: float,
    lateral: tuple[float, float] = (0.0, 0.0),
    tilt: tuple[float, float] = (0.0, 0.0),
) -> ScanPose:
    """Pose whose rig midpoint sits ``lateral`` meters off the pipe axis."""
    return ScanPose(axial_position, (lateral[0] - 0.5 * baseline, lateral[1]), tilt)


def straight_trajectory(
    start: float,
    spacing: float,
    n_frames: int,
    baseline: float,
    lateral: tuple[float, float] = (0.0, 0.0),
    tilt: tuple[float, float] = (0.0, 0.0),
    wobble: float = 0.0,
    wobble_period: float = 0.25,
) -> list[ScanPose]:
    """Constant-spacing traverse, optionally weaving sideways by ``wobble`` m."""
    poses = []
    for i in range(n_frames):
        z = start + i * spacing
        dx = wobble * math.sin(2 * math.pi * (z - start) / wobble_period)
        dy = 0.5 * wobble * math.cos(2 * math.pi * (z - start) / wobble_period)
        poses.append(centered_pose(z, baseline, (lateral[0] + dx, lateral[1] + dy), tilt))
    return poses


def corrosion_pits(
    count: int,
    start: float,
    end: float,
    depth: tuple[float, float] = (0.5e-3, 4e-3),
    size: tuple[float, float] = (0.015, 0.05),
    radius: float = 0.3,
    seed: int = 0,
) -> tuple[DefectSpec, ...]:
    """Random corrosion pits (holes) scattered over ``[start, end]``."""
    rng = np.random.default_rng(seed)
    pits = []
    for _ in range(count):
        ext = rng.uniform(*size)
        pits.append(
            DefectSpec(
                "hole",
                float(rng.uniform(start, end)),
                float(rng.uniform(-np.pi, np.pi)),
                float(ext),
                float(ext / radius),
                float(rng.uniform(*depth)),
            )
        )
    return tuple(pits)


# ---------------------------------------------------------------------------
# scene files


@dataclass(frozen=True)
class ScanPlan:
    start: float = 0.05
    spacing: float = 0.0015
    frames: int = 200
    lateral: tuple[float, float] = (0.0, 0.0)
    tilt: tuple[float, float] = (0.0, 0.0)
    wobble: float = 0.0

    def trajectory(self, baseline: float) -> list[ScanPose]:
        return straight_trajectory(
            self.start, self.spacing, self.frames, baseline, self.lateral, self.tilt, self.wobble
        )


@dataclass(frozen=True)
class Scene:
    pipe: PipeSpec = field(default_factory=PipeSpec)
    laser: LaserPlane = field(default_factory=LaserPlane)
    noise: NoiseParams = field(default_factory=NoiseParams)
    wheel: WheelSpec = field(default_factory=WheelSpec)
    scan: ScanPlan = field(default_factory=ScanPlan)
    corrosion: dict = field(default_factory=dict)

    def with_noise(self, noise: NoiseParams) -> "Scene":
        return replace(self, noise=noise)

    def with_scan(self, **changes) -> "Scene":
        return replace(self, scan=replace(self.scan, **changes))


def scene_from_kv(kv: dict[str, str]) -> Scene:
    g, gv = kvconfig.get_float, kvconfig.get_vector
    diameter = g(kv, "pipe.diameter")
    length = g(kv, "pipe.length")

    defects = []
    ids = sorted({k.split(".")[1] for k in kv if k.startswith("defect.")}, key=lambda s: (len(s), s))
    for i in ids:
        p = f"defect.{i}."
        defects.append(
            DefectSpec(
                kv.get(p + "kind", ""),
                g(kv, p + "axial_center"),
                g(kv, p + "angular_center"),
                g(kv, p + "axial_extent"),
                g(kv, p + "angular_extent"),
                g(kv, p + "magnitude"),
            )
        )
    corrosion = {}
    if "corrosion.count" in kv:
        corrosion = {
            "count": kvconfig.get_int(kv, "corrosion.count"),
            "start": g(kv, "corrosion.start", 0.0),
            "end": g(kv, "corrosion.end", length),
            "depth": tuple(gv(kv, "corrosion.depth", 2, (0.5e-3, 4e-3))),
            "size": tuple(gv(kv, "corrosion.size", 2, (0.015, 0.05))),
            "seed": kvconfig.get_int(kv, "corrosion.seed", 0),
        }
        defects.extend(corrosion_pits(radius=0.5 * diameter, **corrosion))

    stripes = []
    for key in sorted(k for k in kv if k.startswith("texture.stripe.")):
        a, hw, r, gg, b = gv(kv, key, 5)
        stripes.append((float(a), float(hw), (int(r), int(gg), int(b))))
    tint = tuple(int(v) for v in gv(kv, "texture.defect_tint", 3)) if "texture.defect_tint" in kv else None
    texture = WallTexture(
        tuple(int(v) for v in gv(kv, "texture.base", 3, (150, 150, 150))), tuple(stripes), tint
    )
    pipe = PipeSpec(diameter, length, tuple(defects), texture)
    laser = LaserPlane(
        g(kv, "laser.offset", 0.15),
        g(kv, "laser.power", 1.0),
        g(kv, "laser.line_sigma", 1.2),
        g(kv, "laser.attenuation", 0.2),
    )
    noise = NoiseParams(
        g(kv, "noise.pixel_sigma", 2.0),
        g(kv, "noise.jitter", 0.3),
        g(kv, "noise.jitter_corr", 2.0),
        g(kv, "noise.background", 8.0),
    )
    wheel = WheelSpec(g(kv, "wheel.circumference", 0.35), kvconfig.get_int(kv, "wheel.ppr", 1000))
    scan = ScanPlan(
        g(kv, "scan.start", 0.05),
        g(kv, "scan.spacing", 0.0015),
        kvconfig.get_int(kv, "scan.frames", 200),
        tuple(gv(kv, "scan.lateral", 2, (0.0, 0.0))),
        tuple(gv(kv, "scan.tilt", 2, (0.0, 0.0))),
        g(kv, "scan.wobble", 0.0),
    )
    return Scene(pipe, laser, noise, wheel, scan, corrosion)


def scene_to_kv(scene: Scene) -> dict[str, object]:
    pipe = scene.pipe
    kv: dict[str, object] = {"pipe.diameter": pipe.nominal_diameter, "pipe.length": pipe.length}
    tex = pipe.wall_texture
    kv["texture.base"] = list(tex.base)
    for i, (a, hw, color) in enumerate(tex.stripes):
        kv[f"texture.stripe.{i}"] = [a, hw, *color]
    if tex.defect_tint is not None:
        kv["texture.defect_tint"] = list(tex.defect_tint)
    if callable(scene.laser.line_sigma):
        raise ConfigError("cannot serialize a per-angle line_sigma")
    kv.update(
        {
            "laser.offset": scene.laser.offset,
            "laser.power": scene.laser.power,
            "laser.line_sigma": scene.laser.line_sigma,
            "laser.attenuation": scene.laser.attenuation,
        }
    )
    n_pits = scene.corrosion.get("count", 0)
    explicit = pipe.defects[: len(pipe.defects) - n_pits]
    for i, d in enumerate(explicit):
        p = f"defect.{i}."
        kv.update(
            {
                p + "kind": d.kind,
                p + "axial_center": d.axial_center,
                p + "angular_center": d.angular_center,
                p + "axial_extent": d.axial_extent,
                p + "angular_extent": d.angular_extent,
                p + "magnitude": d.magnitude,
            }
        )
    if scene.corrosion:
        c = scene.corrosion
        kv.update(
            {
                "corrosion.count": c["count"],
                "corrosion.start": c["start"],
                "corrosion.end": c["end"],
                "corrosion.depth": list(c["depth"]),
                "corrosion.size": list(c["size"]),
                "corrosion.seed": c["seed"],
            }
        )
    n = scene.noise
    kv.update(
        {
            "noise.pixel_sigma": n.pixel_sigma,
            "noise.jitter": n.jitter_px,
            "noise.jitter_corr": n.jitter_corr_px,
            "noise.background": n.background,
            "wheel.circumference": scene.wheel.circumference,
            "wheel.ppr": scene.wheel.pulses_per_rev,
        }
    )
    s = scene.scan
    kv.update(
        {
            "scan.start": s.start,
            "scan.spacing": s.spacing,
            "scan.frames": s.frames,
            "scan.lateral": list(s.lateral),
            "scan.tilt": list(s.tilt),
            "scan.wobble": s.wobble,
        }
    )
    return kv


def load_scene(path: str | Path) -> Scene:
    return scene_from_kv(kvconfig.load(path))


def save_scene(path: str | Path, scene: Scene) -> None:
    Path(path).write_text(kvconfig.dump(scene_to_kv(scene), header="pipe scene"))
