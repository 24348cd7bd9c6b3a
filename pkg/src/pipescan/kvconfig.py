"""Line-oriented ``name = value`` configuration files.

One entry per line; ``#`` starts a comment; blank lines are ignored. Values
are strings and vectors are whitespace-separated numbers.

Rig files use these keys (all lengths in meters, focal lengths and centers
in pixels)::

    baseline          separation of the stereo focal points
    ir.fx ir.fy       IR focal lengths (both IR cameras share intrinsics)
    ir.cx ir.cy       IR optical center
    ir.skew           IR skew (default 0)
    ir.width ir.height
    ir.k1 ir.k2 ir.k3 IR radial distortion (default 0)
    rgb.*             same intrinsic keys for the color camera (optional)
    rgb.rotation      9 numbers, row-major R with p_rgb = R p_left + t
    rgb.translation   3 numbers, t of the above
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import ConfigError
from .geometry import CameraIntrinsics, CameraModel, CameraPose, DistortionCoeffs, StereoRig


def parse(text: str, source: str = "<string>") -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'name = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        out[key] = value
    return out


def load(path: str | Path) -> dict[str, str]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from exc
    return parse(text, str(path))


def dump(entries: Mapping[str, object], header: str | None = None) -> str:
    lines = []
    if header:
        lines.extend(f"# {h}" for h in header.splitlines())
    for key, value in entries.items():
        lines.append(f"{key} = {format_value(value)}")
    return "\n".join(lines) + "\n"


def format_value(value) -> str:
    if isinstance(value, (list, tuple, np.ndarray)):
        return " ".join(format_value(v) for v in np.asarray(value).ravel().tolist())
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def get_float(kv: Mapping[str, str], key: str, default: float | None = None) -> float:
    if key not in kv:
        if default is None:
            raise ConfigError(f"missing required key {key!r}")
        return default
    try:
        return float(kv[key])
    except ValueError:
        raise ConfigError(f"key {key!r}: expected a number, got {kv[key]!r}") from None


def get_int(kv: Mapping[str, str], key: str, default: int | None = None) -> int:
    value = get_float(kv, key, None if default is None else float(default))
    if value != int(value):
        raise ConfigError(f"key {key!r}: expected an integer, got {kv[key]!r}")
    return int(value)


def get_vector(kv: Mapping[str, str], key: str, n: int, default=None) -> np.ndarray:
    if key not in kv:
        if default is None:
            raise ConfigError(f"missing required key {key!r}")
        return np.asarray(default, dtype=float)
    try:
        vals = np.array([float(v) for v in kv[key].split()])
    except ValueError:
        raise ConfigError(f"key {key!r}: expected {n} numbers, got {kv[key]!r}") from None
    if vals.size != n:
        raise ConfigError(f"key {key!r}: expected {n} numbers, got {vals.size}")
    return vals


def get_bool(kv: Mapping[str, str], key: str, default: bool) -> bool:
    if key not in kv:
        return default
    value = kv[key].lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"key {key!r}: expected a boolean, got {kv[key]!r}")


def _camera_entries(prefix: str, cam: CameraModel) -> dict[str, object]:
    i, d = cam.intrinsics, cam.distortion
    return {
        f"{prefix}.fx": float(i.fx),
        f"{prefix}.fy": float(i.fy),
        f"{prefix}.cx": float(i.cx),
        f"{prefix}.cy": float(i.cy),
        f"{prefix}.skew": float(i.s),
        f"{prefix}.width": int(i.width),
        f"{prefix}.height": int(i.height),
        f"{prefix}.k1": float(d.k1),
        f"{prefix}.k2": float(d.k2),
        f"{prefix}.k3": float(d.k3),
    }


def _read_camera(kv: Mapping[str, str], prefix: str) -> tuple[CameraIntrinsics, DistortionCoeffs]:
    intr = CameraIntrinsics(
        fx=get_float(kv, f"{prefix}.fx"),
        fy=get_float(kv, f"{prefix}.fy"),
        cx=get_float(kv, f"{prefix}.cx"),
        cy=get_float(kv, f"{prefix}.cy"),
        width=get_int(kv, f"{prefix}.width"),
        height=get_int(kv, f"{prefix}.height"),
        s=get_float(kv, f"{prefix}.skew", 0.0),
    )
    dist = DistortionCoeffs(
        get_float(kv, f"{prefix}.k1", 0.0),
        get_float(kv, f"{prefix}.k2", 0.0),
        get_float(kv, f"{prefix}.k3", 0.0),
    )
    return intr, dist


def rig_to_kv(rig: StereoRig, rgb: CameraModel | None = None) -> dict[str, object]:
    entries: dict[str, object] = {"baseline": float(rig.baseline)}
    entries.update(_camera_entries("ir", rig.left))
    if rgb is not None:
        entries.update(_camera_entries("rgb", rgb))
        entries["rgb.rotation"] = rgb.pose.r
        entries["rgb.translation"] = rgb.pose.t
    return entries


def rig_from_kv(kv: Mapping[str, str]) -> tuple[StereoRig, CameraModel | None]:
    intr, dist = _read_camera(kv, "ir")
    rig = StereoRig.from_intrinsics(intr, get_float(kv, "baseline"), dist)
    rgb = None
    if "rgb.fx" in kv:
        rintr, rdist = _read_camera(kv, "rgb")
        pose = CameraPose(
            get_vector(kv, "rgb.rotation", 9, np.eye(3).ravel()).reshape(3, 3),
            get_vector(kv, "rgb.translation", 3, np.zeros(3)),
        )
        rgb = CameraModel(rintr, rdist, pose)
    return rig, rgb


def save_rig(path: str | Path, rig: StereoRig, rgb: CameraModel | None = None) -> None:
    Path(path).write_text(dump(rig_to_kv(rig, rgb), header="stereo IR rig + RGB camera"))


def load_rig(path: str | Path) -> tuple[StereoRig, CameraModel | None]:
    return rig_from_kv(load(path))
