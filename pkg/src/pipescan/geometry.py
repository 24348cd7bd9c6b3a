"""Camera and stereo geometry.

Conventions used throughout the package:

* Pixel coordinates have their origin at the top-left corner of the sensor,
  ``x`` to the right and ``y`` down. Pixel centers sit on integer coordinates.
* Normalized image coordinates are ``((u - cx - s*yn) / fx, (v - cy) / fy)``.
* A camera pose ``[R | t]`` maps world points into the camera frame,
  ``p_cam = R @ p_world + t``. The camera looks along ``+z``.
* In a stereo rig the world frame is the left camera frame.

Each scalar operation has an array counterpart (``*_points`` / ``*_normalized``)
used by the per-frame pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import BehindCamera, ConfigError, NonConvergence, NotRectified, ZeroDisparity


class PixelPoint(NamedTuple):
    x: float
    y: float


class Point3(NamedTuple):
    x: float
    y: float
    z: float


@dataclass(frozen=True)
class DistortionCoeffs:
    """Radial distortion coefficients, truncated after the sixth-order term."""

    k1: float = 0.0
    k2: float = 0.0
    k3: float = 0.0

    @property
    def is_zero(self) -> bool:
        return self.k1 == 0.0 and self.k2 == 0.0 and self.k3 == 0.0

    def factor(self, r2):
        """Radial scale ``1 + k1 r^2 + k2 r^4 + k3 r^6`` for squared radius ``r2``."""
        return 1.0 + r2 * (self.k1 + r2 * (self.k2 + r2 * self.k3))

    def slope(self, r2):
        """Derivative of ``r * factor(r^2)`` with respect to ``r``."""
        return 1.0 + r2 * (3 * self.k1 + r2 * (5 * self.k2 + r2 * 7 * self.k3))

    def is_monotonic(self, r_distorted_max: float, samples: int = 4096) -> bool:
        """Check the forward map ``r -> r * factor(r^2)`` is increasing until it
        reaches ``r_distorted_max``.

        The search extends to three times ``r_distorted_max`` in undistorted
        radius; a model that never reaches the sensor edge is rejected.
        """
        if self.is_zero:
            return True
        r = np.linspace(0.0, 3.0 * r_distorted_max, samples)
        r2 = r * r
        forward = r * self.factor(r2)
        slope = self.slope(r2)
        reached = np.nonzero(forward >= r_distorted_max)[0]
        if reached.size == 0:
            return False
        return bool(np.all(slope[: reached[0] + 1] > 0.0))


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    s: float = 0.0

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ConfigError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (self.width > 0 and self.height > 0):
            raise ConfigError(f"sensor size must be positive, got {self.width}x{self.height}")

    @property
    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, self.s, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    def to_normalized(self, px: np.ndarray) -> np.ndarray:
        """Map pixel coordinates ``(..., 2)`` to normalized coordinates."""
        px = np.asarray(px, dtype=float)
        yn = (px[..., 1] - self.cy) / self.fy
        xn = (px[..., 0] - self.cx - self.s * yn) / self.fx
        return np.stack([xn, yn], axis=-1)

    def to_pixels(self, xy: np.ndarray) -> np.ndarray:
        xy = np.asarray(xy, dtype=float)
        u = self.fx * xy[..., 0] + self.s * xy[..., 1] + self.cx
        v = self.fy * xy[..., 1] + self.cy
        return np.stack([u, v], axis=-1)

    def max_normalized_radius(self) -> float:
        corners = np.array(
            [[0, 0], [self.width, 0], [0, self.height], [self.width, self.height]], dtype=float
        )
        return float(np.max(np.linalg.norm(self.to_normalized(corners), axis=1)))


def _frozen_array(a, shape) -> np.ndarray:
    arr = np.array(a, dtype=float).reshape(shape)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class CameraPose:
    """World-to-camera transform ``p_cam = r @ p_world + t``."""

    r: np.ndarray = field(default_factory=lambda: np.eye(3))
    t: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "r", _frozen_array(self.r, (3, 3)))
        object.__setattr__(self, "t", _frozen_array(self.t, (3,)))
        if not np.all(np.abs(self.r.T @ self.r - np.eye(3)) < 1e-9):
            raise ConfigError("rotation matrix is not orthonormal")
        if np.linalg.det(self.r) <= 0:
            raise ConfigError("rotation matrix must have det=+1")

    @property
    def center(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return -self.r.T @ self.t

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=float) @ self.r.T + self.t


@dataclass(frozen=True, eq=False)
class CameraModel:
    intrinsics: CameraIntrinsics
    distortion: DistortionCoeffs = field(default_factory=DistortionCoeffs)
    pose: CameraPose = field(default_factory=CameraPose)

    def __post_init__(self):
        r_max = self.intrinsics.max_normalized_radius()
        if not self.distortion.is_monotonic(r_max):
            raise ConfigError(
                f"distortion {self.distortion} is not invertible over the sensor field of view"
            )

    @property
    def width(self) -> int:
        return self.intrinsics.width

    @property
    def height(self) -> int:
        return self.intrinsics.height

    def with_pose(self, pose: CameraPose) -> "CameraModel":
        return CameraModel(self.intrinsics, self.distortion, pose)


@dataclass(frozen=True, eq=False)
class StereoRig:
    """Left/right camera pair. The rig frame is the left camera frame."""

    left: CameraModel
    right: CameraModel
    baseline: float
    rectified: bool = True

    def __post_init__(self):
        if not self.baseline > 0:
            raise ConfigError(f"baseline must be positive, got {self.baseline}")
        if self.rectified:
            lp, rp = self.left.pose, self.right.pose
            if not np.allclose(lp.r, rp.r, atol=1e-9):
                raise ConfigError("rectified rig needs equal left/right rotations")
            offset = rp.t - lp.t
            if not np.allclose(offset, [-self.baseline, 0.0, 0.0], atol=1e-9):
                raise ConfigError(
                    "rectified rig needs a pure x-axis baseline matching `baseline`"
                )
            li, ri = self.left.intrinsics, self.right.intrinsics
            for name in ("fx", "fy", "cx", "cy", "s", "height"):
                if getattr(li, name) != getattr(ri, name):
                    raise ConfigError(f"rectified rig needs equal intrinsics, {name} differs")

    @classmethod
    def from_intrinsics(
        cls,
        intrinsics: CameraIntrinsics,
        baseline: float,
        distortion: DistortionCoeffs | None = None,
    ) -> "StereoRig":
        """Rectified rig with the left camera at the origin and the right camera
        ``baseline`` meters along +x."""
        distortion = distortion or DistortionCoeffs()
        left = CameraModel(intrinsics, distortion, CameraPose())
        right = CameraModel(intrinsics, distortion, CameraPose(np.eye(3), [-baseline, 0.0, 0.0]))
        return cls(left, right, baseline, rectified=True)

    @property
    def focal(self) -> float:
        return self.left.intrinsics.fx


# ---------------------------------------------------------------------------
# distortion


def distort_normalized(xy: np.ndarray, d: DistortionCoeffs) -> np.ndarray:
    xy = np.asarray(xy, dtype=float)
    r2 = np.sum(xy * xy, axis=-1, keepdims=True)
    return xy * d.factor(r2)


def undistort_normalized(
    xy: np.ndarray,
    d: DistortionCoeffs,
    max_iter: int = 50,
    tol: float = 1e-12,
) -> np.ndarray:
    """Invert :func:`distort_normalized` by damped fixed-point iteration.

    Iterates ``x <- x + lam * (p / factor(|x|^2) - x)`` with the damping
    ``lam = factor / slope`` taken from the radial map's local derivative,
    which keeps convergence fast close to the edge of the monotonic field
    of view. ``lam`` is halved for points whose residual grows.

    Raises:
        NonConvergence: some point did not reach ``tol`` within ``max_iter``.
    """
    p = np.asarray(xy, dtype=float)
    if d.is_zero:
        return p.copy()
    flat = p.reshape(-1, 2)
    x = flat.copy()
    lam = np.ones(len(flat))
    resid = np.linalg.norm(distort_normalized(x, d) - flat, axis=1)
    for _ in range(max_iter):
        active = resid > tol
        if not np.any(active):
            break
        r2 = np.sum(x[active] ** 2, axis=1, keepdims=True)
        factor = d.factor(r2)
        target = flat[active] / factor
        step = lam[active, None] * factor / d.slope(r2)
        cand = x[active] + step * (target - x[active])
        cand_resid = np.linalg.norm(distort_normalized(cand, d) - flat[active], axis=1)
        improved = cand_resid < resid[active]
        idx = np.nonzero(active)[0]
        x[idx[improved]] = cand[improved]
        resid[idx[improved]] = cand_resid[improved]
        lam[idx[~improved]] *= 0.5
    if np.any(resid > tol) or not np.all(np.isfinite(x)):
        worst = float(np.nanmax(resid))
        raise NonConvergence(f"undistortion residual {worst:.3g} after {max_iter} iterations")
    return x.reshape(p.shape)


def distort_point(p: PixelPoint, d: DistortionCoeffs) -> PixelPoint:
    """Apply radial distortion to a point in normalized image coordinates."""
    x, y = distort_normalized(np.array([p[0], p[1]]), d)
    return PixelPoint(float(x), float(y))


def undistort_point(p: PixelPoint, d: DistortionCoeffs) -> PixelPoint:
    x, y = undistort_normalized(np.array([p[0], p[1]]), d)
    return PixelPoint(float(x), float(y))


# ---------------------------------------------------------------------------
# projection


def project_points(points: np.ndarray, cam: CameraModel, check_depth: bool = True) -> np.ndarray:
    """Project world points ``(N, 3)`` to pixel coordinates ``(N, 2)``.

    Raises:
        BehindCamera: a point has camera-frame depth <= 0 and ``check_depth``
            is set. With ``check_depth=False`` such points come back as NaN.
    """
    pc = cam.pose.apply(np.atleast_2d(points))
    z = pc[:, 2]
    behind = z <= 0
    if check_depth and np.any(behind):
        raise BehindCamera(f"{int(behind.sum())} point(s) at or behind the camera plane")
    with np.errstate(divide="ignore", invalid="ignore"):
        xy = pc[:, :2] / z[:, None]
    xy = distort_normalized(xy, cam.distortion)
    px = cam.intrinsics.to_pixels(xy)
    px[behind] = np.nan
    return px


def project_point(pw: Point3, cam: CameraModel) -> PixelPoint:
    u, v = project_points(np.array([pw], dtype=float), cam)[0]
    return PixelPoint(float(u), float(v))


def pixels_to_rays(px: np.ndarray, cam: CameraModel) -> np.ndarray:
    """Undistorted normalized coordinates for pixel positions ``(N, 2)``."""
    xy = cam.intrinsics.to_normalized(px)
    return undistort_normalized(xy, cam.distortion)


def undistort_image(image: np.ndarray, cam: CameraModel) -> np.ndarray:
    """Resample an image onto the distortion-free pinhole grid of ``cam``."""
    import cv2

    if cam.distortion.is_zero:
        return image
    h, w = image.shape[:2]
    v, u = np.mgrid[0:h, 0:w].astype(float)
    xy = cam.intrinsics.to_normalized(np.stack([u, v], axis=-1))
    src = cam.intrinsics.to_pixels(distort_normalized(xy, cam.distortion)).astype(np.float32)
    return cv2.remap(image, src[..., 0], src[..., 1], cv2.INTER_LINEAR, borderValue=0)


# ---------------------------------------------------------------------------
# stereo


def epipolar_row(p_left: PixelPoint, rig: StereoRig) -> float:
    """Row of the right image on which the match of ``p_left`` lies."""
    if not rig.rectified:
        raise NotRectified("epipolar rows are only horizontal in a rectified rig")
    return float(p_left[1])


DISPARITY_FLOOR_PX = 0.5


def triangulate_points(
    left: np.ndarray,
    right: np.ndarray,
    rig: StereoRig,
    disparity_floor: float = DISPARITY_FLOOR_PX,
) -> np.ndarray:
    """Triangulate matched pixels ``(N, 2)`` into left-camera coordinates.

    Depth is ``Z = f * baseline / d`` with ``d = x_l - x_r``; ``X`` and ``Y``
    follow from the left pixel's normalized coordinates scaled by ``Z``.

    Raises:
        NotRectified: the rig is not rectified.
        ZeroDisparity: some disparity is at or below ``disparity_floor`` pixels.
    """
    if not rig.rectified:
        raise NotRectified("triangulation needs a rectified rig")
    nl = pixels_to_rays(np.atleast_2d(left), rig.left)
    nr = pixels_to_rays(np.atleast_2d(right), rig.right)
    f = rig.focal
    d = f * (nl[:, 0] - nr[:, 0])
    bad = ~(d > disparity_floor)
    if np.any(bad):
        raise ZeroDisparity(
            f"{int(bad.sum())} disparity value(s) <= {disparity_floor} px (min {np.min(d):.3g})"
        )
    z = f * rig.baseline / d
    return np.column_stack([nl[:, 0] * z, nl[:, 1] * z, z])


def triangulate(p_left: PixelPoint, p_right: PixelPoint, rig: StereoRig) -> Point3:
    x, y, z = triangulate_points(np.array([p_left]), np.array([p_right]), rig)[0]
    return Point3(float(x), float(y), float(z))


# ---------------------------------------------------------------------------
# rotations


def rotation_x(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rotation_y(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rotation_z(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
