"""Laser ring mask extraction and ring center detection."""

from __future__ import annotations

import functools
import logging
from dataclasses import dataclass

import cv2
import numpy as np

from .errors import EmptyMask, NoCircle

logger = logging.getLogger(__name__)

MIN_MASK_PIXELS = 50
MAX_FINE_VOTERS = 1500
PATCH_HALF = 9


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """Boolean image of laser pixels."""

    bits: np.ndarray

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.bits))

    def as_image(self) -> np.ndarray:
        return self.bits.astype(np.uint8) * 255

    @functools.cached_property
    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Row and column indices of the set pixels, in row-major order."""
        found = cv2.findNonZero(self.bits.view(np.uint8))
        if found is None:
            return np.empty(0, np.intp), np.empty(0, np.intp)
        xy = found.reshape(-1, 2).astype(np.intp)
        return xy[:, 1], xy[:, 0]


@dataclass(frozen=True)
class RingCenter:
    cx: float
    cy: float
    r_est: float
    confidence: float


def otsu_threshold(image: np.ndarray) -> float:
    t, _ = cv2.threshold(image, 0, 255, cv2.THRESH_BINARY + cv2.THRESH_OTSU)
    return float(t) + 1.0


# neighbour offsets P2..P9, clockwise from north
_RING8 = ((-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1))


@functools.lru_cache(maxsize=None)
def _deletion_tables() -> tuple[np.ndarray, np.ndarray]:
    """Per 8-neighbour code, whether a pixel may be peeled in each sub-pass.

    A pixel is removable when it has 2..6 neighbours and exactly one 0->1
    transition around its neighbourhood (so removal keeps the line joined
    and never shortens an end). The two sub-passes peel opposite sides.
    """
    codes = np.arange(256)
    bits = (codes[:, None] >> np.arange(8)) & 1
    n = bits.sum(axis=1)
    transitions = ((bits == 0) & (np.roll(bits, -1, axis=1) == 1)).sum(axis=1)
    p2, _, p4, _, p6, _, p8, _ = bits.T
    base = (n >= 2) & (n <= 6) & (transitions == 1)
    first = base & (p2 * p4 * p6 == 0) & (p4 * p6 * p8 == 0)
    second = base & (p2 * p4 * p8 == 0) & (p2 * p6 * p8 == 0)
    return first, second


def thin_ridge(mask: np.ndarray, max_iter: int = 50) -> np.ndarray:
    """Reduce line cross-sections to at most 2 px, keeping 8-connectivity.

    Each sub-pass splits the mask into its eroded core and the contour
    ``thick - eroded``, then ORs back the contour pixels that must stay
    (ends and pixels whose removal would split the line). Sub-passes peel
    opposite sides in turn until nothing changes. Removable pixels are
    always contour pixels, so the work runs on the lit-pixel list.
    """
    img = np.pad(mask.astype(np.uint8), 1)
    flat = img.reshape(-1)
    width = img.shape[1]
    offsets = [dy * width + dx for dy, dx in _RING8]
    idx = np.flatnonzero(flat)
    tables = _deletion_tables()
    for _ in range(max_iter):
        changed = False
        for table in tables:
            code = flat[idx + offsets[0]].copy()
            for k in range(1, 8):
                code |= flat[idx + offsets[k]] << k
            kill = table[code]
            if kill.any():
                flat[idx[kill]] = 0
                idx = idx[~kill]
                changed = True
        if not changed:
            break
    return img[1:-1, 1:-1].astype(bool)


def extract_mask(
    image: np.ndarray,
    threshold: float | None = None,
    thinning: bool = True,
    min_pixels: int = MIN_MASK_PIXELS,
) -> BinaryMask:
    """Threshold an 8-bit IR frame into a laser mask, optionally thinned.

    ``threshold=None`` picks an Otsu split per frame.

    Raises:
        EmptyMask: fewer than ``min_pixels`` pixels survive thresholding.
    """
    if image.dtype != np.uint8 or image.ndim != 2:
        raise ValueError("extract_mask expects an 8-bit grayscale image")
    if threshold is None:
        threshold = otsu_threshold(image)
    bits = image >= threshold
    n = int(np.count_nonzero(bits))
    if n < min_pixels:
        raise EmptyMask(f"only {n} pixels >= threshold {threshold:g}")
    if thinning:
        x, y, w, h = cv2.boundingRect(bits.view(np.uint8))
        y0, x0 = max(y - 3, 0), max(x - 3, 0)
        box = (slice(y0, y + h + 3), slice(x0, x + w + 3))
        bits[box] = thin_ridge(bits[box])
    return BinaryMask(bits)


# ---------------------------------------------------------------------------
# Hough center detection


def _normal_angles(bits: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Local line normal direction at mask pixels.

    The second moments of the set pixels in a square patch around each pixel
    give the line direction as the principal axis; the normal is
    perpendicular to it.
    """
    h, w = bits.shape
    half = PATCH_HALF
    offs = np.arange(-half, half + 1)
    dy, dx = (a.ravel() for a in np.meshgrid(offs, offs, indexing="ij"))
    yy = np.clip(ys[:, None] + dy, 0, h - 1)
    xx = np.clip(xs[:, None] + dx, 0, w - 1)
    wgt = bits[yy, xx].astype(np.float64)
    n = wgt.sum(axis=1)
    mx, my = wgt @ dx / n, wgt @ dy / n
    cxx = wgt @ (dx * dx) / n - mx * mx
    cyy = wgt @ (dy * dy) / n - my * my
    cxy = wgt @ (dx * dy) / n - mx * my
    return 0.5 * np.arctan2(2 * cxy, cxx - cyy) + 0.5 * np.pi


def _center_votes(bits, ys, xs, r_min, r_max, max_voters=800):
    h, w = bits.shape
    if len(xs) > max_voters:
        pick = np.linspace(0, len(xs) - 1, max_voters).astype(int)
        ys, xs = ys[pick], xs[pick]
    theta = _normal_angles(bits, ys, xs)
    steps = np.arange(r_min, r_max + 1.0, 2.0)
    # votes land on a half-resolution grid; the local stage refines
    hh, hw = (h + 1) // 2, (w + 1) // 2
    acc = np.zeros(hh * hw, dtype=np.float64)
    for sign in (1.0, -1.0):
        vx = xs[:, None] + sign * np.cos(theta)[:, None] * steps
        vy = ys[:, None] + sign * np.sin(theta)[:, None] * steps
        ix, iy = (np.rint(vx).astype(np.int64) >> 1), (np.rint(vy).astype(np.int64) >> 1)
        ok = (ix >= 0) & (ix < hw) & (iy >= 0) & (iy < hh)
        acc += np.bincount((iy[ok] * hw + ix[ok]), minlength=hh * hw)
    acc = cv2.GaussianBlur(acc.reshape(hh, hw).astype(np.float32), (0, 0), 2.0)
    iy, ix = np.unravel_index(int(np.argmax(acc)), acc.shape)
    return float(2 * ix + 0.5), float(2 * iy + 0.5)


def _quadratic_peak(fm, f0, fp) -> float:
    denom = fm - 2 * f0 + fp
    if denom >= 0:
        return 0.0
    return float(np.clip(0.5 * (fm - fp) / denom, -0.5, 0.5))


def _local_accumulator(px, py, cx0, cy0, r_min, r_max, half=3, r_step=2.0):
    offs = np.arange(-half, half + 1)
    gx, gy = np.meshgrid(cx0 + offs, cy0 + offs)
    centers = np.column_stack([gx.ravel(), gy.ravel()])
    n_r = int(np.floor((r_max - r_min) / r_step)) + 1
    dist = np.hypot(px[None, :] - centers[:, 0, None], py[None, :] - centers[:, 1, None])
    pos = (dist - r_min) / r_step
    lo = np.floor(pos).astype(np.int64)
    frac = pos - lo
    acc = np.zeros(len(centers) * n_r)
    rows = np.arange(len(centers))[:, None] * n_r
    for off, wgt in ((0, 1.0 - frac), (1, frac)):
        b = lo + off
        ok = (b >= 0) & (b < n_r)
        acc += np.bincount((rows + b)[ok], weights=wgt[ok], minlength=acc.size)
    return acc.reshape(len(offs), len(offs), n_r), offs


def detect_center(
    mask: BinaryMask,
    r_min: float = 100.0,
    r_max: float = 340.0,
    min_confidence: float = 0.15,
    guess: tuple[float, float] | None = None,
) -> RingCenter:
    """Circular Hough transform for the laser ring center.

    A gradient-direction vote over mask-pixel normals gives a coarse center;
    a full (cx, cy, r) accumulator at 1 px / 1 px / 2 px resolution around it
    then picks the peak, refined per axis with a 3-point quadratic fit.
    ``confidence`` is the peak bin's share of all votes cast at the peak
    center. A ``guess`` within a few pixels of the center skips the coarse
    vote.

    Raises:
        ValueError: the radius range is invalid.
        EmptyMask: the mask is empty.
        NoCircle: the peak confidence is below ``min_confidence``.
    """
    if not 0 < r_min < r_max:
        raise ValueError(f"need 0 < r_min < r_max, got {r_min}, {r_max}")
    ys, xs = mask.coords
    if len(xs) < 3:
        raise EmptyMask("mask has no pixels to vote with")
    if guess is None:
        cx0, cy0 = _center_votes(mask.bits, ys, xs, r_min, r_max)
    else:
        cx0, cy0 = guess
    px, py = xs.astype(float), ys.astype(float)
    if len(px) > MAX_FINE_VOTERS:
        pick = np.linspace(0, len(px) - 1, MAX_FINE_VOTERS).astype(int)
        px, py = px[pick], py[pick]
    cx0, cy0 = round(cx0), round(cy0)
    r_step = 2.0
    for _ in range(6):
        acc, offs = _local_accumulator(px, py, cx0, cy0, r_min, r_max, r_step=r_step)
        iy, ix, ir = np.unravel_index(int(np.argmax(acc)), acc.shape)
        half = len(offs) // 2
        if 0 < ix < 2 * half and 0 < iy < 2 * half:
            break
        cx0, cy0 = cx0 + offs[ix], cy0 + offs[iy]
    peak = acc[iy, ix, ir]
    column = acc[iy, ix].sum()
    confidence = float(peak / column) if column > 0 else 0.0
    dx = _quadratic_peak(acc[iy, ix - 1, ir], peak, acc[iy, ix + 1, ir]) if 0 < ix < acc.shape[1] - 1 else 0.0
    dy = _quadratic_peak(acc[iy - 1, ix, ir], peak, acc[iy + 1, ix, ir]) if 0 < iy < acc.shape[0] - 1 else 0.0
    dr = _quadratic_peak(acc[iy, ix, ir - 1], peak, acc[iy, ix, ir + 1]) if 0 < ir < acc.shape[2] - 1 else 0.0
    cx = cx0 + offs[ix] + dx
    cy = cy0 + offs[iy] + dy
    r_est = r_min + (ir + dr) * r_step
    if confidence < min_confidence or peak <= 0:
        raise NoCircle(f"Hough peak confidence {confidence:.3f} below {min_confidence}")
    if not (0 <= cx < mask.width and 0 <= cy < mask.height):
        raise NoCircle(f"ring center ({cx:.1f}, {cy:.1f}) outside the image")
    return RingCenter(float(cx), float(cy), float(r_est), confidence)
