"""Scan directories: manifest, frame images, ground truth and ring CSVs.

A scan directory holds::

    manifest.csv          one row per frame (see MANIFEST_FIELDS)
    scene.txt, rig.txt    copies of the inputs the scan was rendered from
    frames/NNNNN_left.pgm, NNNNN_right.pgm, NNNNN_rgb.ppm
    truth/NNNNN.csv       analytic laser ring of each frame
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import cv2
import numpy as np

from .errors import IoFailure, ManifestError
from .profiling import RingProfile
from .scene import FrameBundle, ScanPose

MANIFEST = "manifest.csv"
MANIFEST_FIELDS = (
    "frame_index",
    "left",
    "right",
    "rgb",
    "encoder_ticks",
    "truth",
    "axial_position_m",
    "lateral_x_m",
    "lateral_y_m",
    "pitch_rad",
    "yaw_rad",
)
RING_FIELDS = (
    "ring_index",
    "axial_position_m",
    "angle_rad",
    "x_m",
    "y_m",
    "z_m",
    "radius_mm",
    "deviation_mm",
    "r",
    "g",
    "b",
    "flags",
)


@dataclass(frozen=True)
class ManifestEntry:
    frame_index: int
    left: str
    right: str
    rgb: str
    encoder_ticks: int
    truth: str
    pose: ScanPose


def write_image(path: Path, image: np.ndarray) -> None:
    """Write an 8-bit gray (PGM) or RGB (PPM) image."""
    data = image if image.ndim == 2 else cv2.cvtColor(image, cv2.COLOR_RGB2BGR)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not cv2.imwrite(str(path), data):
        raise IoFailure(f"cannot write image {path}")


def read_image(path: Path, color: bool = False) -> np.ndarray:
    flag = cv2.IMREAD_COLOR if color else cv2.IMREAD_GRAYSCALE
    img = cv2.imread(str(path), flag)
    if img is None:
        raise IoFailure(f"cannot read image {path}")
    return cv2.cvtColor(img, cv2.COLOR_BGR2RGB) if color else img


def _fmt(v: float) -> str:
    return repr(float(v))


def truth_csv(bundle: FrameBundle) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["angle_rad", "x_m", "y_m", "z_m", "radius_m"])
    t = bundle.ring_truth
    for a, p, r in zip(t.angles, t.points, t.radii):
        w.writerow([_fmt(a), _fmt(p[0]), _fmt(p[1]), _fmt(p[2]), _fmt(r)])
    return out.getvalue()


def write_frame(scan_dir: Path, bundle: FrameBundle) -> ManifestEntry:
    stem = f"{bundle.index:05d}"
    left, right = f"frames/{stem}_left.pgm", f"frames/{stem}_right.pgm"
    rgb = f"frames/{stem}_rgb.ppm" if bundle.rgb is not None else ""
    truth = f"truth/{stem}.csv"
    write_image(scan_dir / left, bundle.left_ir)
    write_image(scan_dir / right, bundle.right_ir)
    if bundle.rgb is not None:
        write_image(scan_dir / rgb, bundle.rgb)
    (scan_dir / "truth").mkdir(exist_ok=True)
    try:
        (scan_dir / truth).write_text(truth_csv(bundle))
    except OSError as exc:
        raise IoFailure(f"cannot write {scan_dir / truth}: {exc.strerror}") from exc
    return ManifestEntry(bundle.index, left, right, rgb, bundle.encoder_ticks, truth, bundle.pose_truth)


def write_manifest(scan_dir: Path, entries: Sequence[ManifestEntry]) -> Path:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(MANIFEST_FIELDS)
    for e in entries:
        p = e.pose
        w.writerow(
            [e.frame_index, e.left, e.right, e.rgb, e.encoder_ticks, e.truth, _fmt(p.axial_position),
             _fmt(p.lateral_offset[0]), _fmt(p.lateral_offset[1]), _fmt(p.tilt[0]), _fmt(p.tilt[1])]
        )
    path = scan_dir / MANIFEST
    try:
        path.write_text(out.getvalue())
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc.strerror}") from exc
    return path


def read_manifest(scan_dir: str | Path) -> list[ManifestEntry]:
    """Parse ``manifest.csv`` of a scan directory.

    Raises:
        ManifestError: the manifest is missing, empty or malformed.
    """
    path = Path(scan_dir) / MANIFEST
    if not path.is_file():
        raise ManifestError(f"no {MANIFEST} in {scan_dir}")
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(MANIFEST_FIELDS) - set(reader.fieldnames or ())
        if missing:
            raise ManifestError(f"{path}: missing columns {sorted(missing)}")
        entries = []
        for line, row in enumerate(reader, 2):
            try:
                pose = ScanPose(
                    float(row["axial_position_m"]),
                    (float(row["lateral_x_m"]), float(row["lateral_y_m"])),
                    (float(row["pitch_rad"]), float(row["yaw_rad"])),
                )
                entries.append(
                    ManifestEntry(int(row["frame_index"]), row["left"], row["right"], row["rgb"],
                                  int(row["encoder_ticks"]), row["truth"], pose)
                )
            except (TypeError, ValueError) as exc:
                raise ManifestError(f"{path}:{line}: {exc}") from None
    if not entries:
        raise ManifestError(f"{path} lists no frames")
    return entries


def read_truth(path: str | Path) -> np.ndarray:
    """Truth CSV as an array with columns angle, x, y, z, radius."""
    try:
        return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except OSError as exc:
        raise IoFailure(f"cannot read truth file {path}: {exc}") from exc


def ring_rows(ring: RingProfile) -> Iterator[list[str]]:
    dev = ring.deviation_mm
    for i in range(len(ring)):
        p = ring.points[i]
        c = ring.colors[i]
        yield [
            str(ring.ring_index), _fmt(ring.axial_position), _fmt(ring.angles[i]),
            _fmt(p[0]), _fmt(p[1]), _fmt(p[2]), _fmt(ring.radius_mm[i]),
            "" if dev is None else _fmt(dev[i]),
            str(int(c[0])), str(int(c[1])), str(int(c[2])), str(int(ring.flags[i])),
        ]


def write_rings_csv(path: str | Path, rings: Iterable[RingProfile]) -> Path:
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(RING_FIELDS)
            for ring in rings:
                w.writerows(ring_rows(ring))
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc.strerror}") from exc
    return path


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence[object]]) -> Path:
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc.strerror}") from exc
    return path


def read_csv(path: str | Path) -> list[dict[str, str]]:
    try:
        with Path(path).open(newline="") as fh:
            return list(csv.DictReader(fh))
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc.strerror}") from exc
