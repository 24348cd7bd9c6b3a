"""Command-line front end: ``pipescan simulate | process | report``.

Exit codes: 0 success, 1 configuration error, 2 processing failure,
3 file or manifest error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from . import kvconfig, scanio
from .errors import ConfigError, IoFailure, ManifestError, PipeScanError
from .extraction import extract_mask
from .mapping import PipeMap, compute_heatmap, compute_rmse, ring_diameters
from .mesh import Mesh, build_mesh, export_ply
from .pipeline import reconstruct_scan
from .profiling import ProfilerSettings
from .scene import FrameBundle, NoiseParams, load_scene, save_scene, simulate_scan
from .throughput import REFERENCE_FPS, format_reports, latency_fit, measure_throughput

logger = logging.getLogger("pipescan")

EXIT_OK, EXIT_CONFIG, EXIT_PROCESSING, EXIT_IO = 0, 1, 2, 3
MIN_RAYS = 8
MIN_RING_FRACTION = 0.9
SCENE_COPY, RIG_COPY = "scene.txt", "rig.txt"


@dataclass(frozen=True)
class RunConfig:
    command: str
    scene: Path | None = None
    rig: Path | None = None
    scan: Path | None = None
    out: Path | None = None
    seed: int = 0
    noise: NoiseParams | None = None
    n_rays: int = 3000
    threshold: float | None = None
    ply_format: str = "binary"
    frames: int | None = None
    rgb: bool = True
    masks: bool = False
    ray_settings: tuple[int, ...] = (1000, 3000, 6000)
    bench_frames: int = 100

    def validate(self) -> "RunConfig":
        for name in ("scene", "rig"):
            path = getattr(self, name)
            if path is not None and not path.is_file():
                raise ConfigError(f"--{name}: no such file {path}")
        if self.n_rays < MIN_RAYS or any(n < MIN_RAYS for n in self.ray_settings):
            raise ConfigError(f"ray counts must be >= {MIN_RAYS}")
        if self.ply_format not in ("ascii", "binary"):
            raise ConfigError(f"--format must be ascii or binary, got {self.ply_format!r}")
        if self.frames is not None and self.frames < 1:
            raise ConfigError("--frames must be >= 1")
        if self.out is None:
            raise ConfigError("--out is required")
        return self


def parse_noise(text: str) -> NoiseParams:
    """``none``, ``default`` or comma-separated ``key=value`` overrides of
    pixel_sigma, jitter, jitter_corr, background."""
    text = text.strip().lower()
    if text == "none":
        return NoiseParams.none()
    if text == "default":
        return NoiseParams()
    names = {"pixel_sigma": "pixel_sigma", "jitter": "jitter_px", "jitter_corr": "jitter_corr_px", "background": "background"}
    changes = {}
    for item in filter(None, (p.strip() for p in text.split(","))):
        key, _, value = item.partition("=")
        if key not in names or not value:
            raise ConfigError(f"--noise: expected none, default or key=value with keys {sorted(names)}, got {item!r}")
        try:
            changes[names[key]] = float(value)
        except ValueError:
            raise ConfigError(f"--noise: {key} needs a number, got {value!r}") from None
    return replace(NoiseParams(), **changes)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pipescan", description="Stereo laser-ring pipe profiler")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, help="key = value file; flags override it")
        p.add_argument("--out", type=Path)

    sim = sub.add_parser("simulate", help="render a synthetic scan directory")
    common(sim)
    sim.add_argument("--scene", type=Path)
    sim.add_argument("--rig", type=Path)
    sim.add_argument("--seed", type=int)
    sim.add_argument("--noise", help="none | default | pixel_sigma=..,jitter=..")
    sim.add_argument("--frames", type=int, help="render only the first N frames of the scan plan")
    sim.add_argument("--no-rgb", action="store_true", help="skip the color frames")

    proc = sub.add_parser("process", help="reconstruct a scan directory into map artifacts")
    common(proc)
    proc.add_argument("--scan", type=Path)
    proc.add_argument("--rig", type=Path, help="defaults to the scan's rig copy")
    proc.add_argument("--rays", type=int)
    proc.add_argument("--threshold", type=float, help="fixed mask threshold (default: Otsu per frame)")
    proc.add_argument("--format", dest="ply_format", choices=("ascii", "binary"))
    proc.add_argument("--frames", type=int)
    proc.add_argument("--masks", action="store_true", help="also write each frame's laser mask as PGM")

    rep = sub.add_parser("report", help="throughput and accuracy summary of processed artifacts")
    common(rep)
    rep.add_argument("--scan", type=Path)
    rep.add_argument("--rig", type=Path)
    rep.add_argument("--rays", help="comma-separated points-per-frame settings (default 1000,3000,6000)")
    rep.add_argument("--frames", type=int, help="distinct scan frames cycled through the benchmark")
    rep.add_argument("--bench-frames", type=int, help="timed frames per setting (>= 100)")
    return parser


def _config_values(path: Path | None) -> dict[str, str]:
    if path is None:
        return {}
    kv = kvconfig.load(path)
    base = path.parent
    for key in ("scene", "rig", "scan", "out"):
        if key in kv:
            kv[key] = str((base / kv[key]).resolve()) if not Path(kv[key]).is_absolute() else kv[key]
    return kv


def make_config(args: argparse.Namespace) -> RunConfig:
    kv = _config_values(getattr(args, "config", None))

    def pick(name, flag=None, convert=str):
        value = getattr(args, flag or name, None)
        if value is not None:
            return value
        if name in kv:
            try:
                return convert(kv[name])
            except ValueError:
                raise ConfigError(f"config key {name!r}: bad value {kv[name]!r}") from None
        return None

    def path(name):
        v = pick(name, convert=Path)
        return Path(v) if v is not None else None

    cfg = RunConfig(command=args.command, out=path("out"))
    changes = {}
    if args.command == "simulate":
        noise = pick("noise")
        changes = dict(
            scene=path("scene"),
            rig=path("rig"),
            seed=pick("seed", convert=int) or 0,
            noise=parse_noise(noise) if noise else None,
            frames=pick("frames", convert=int),
            rgb=not (args.no_rgb or kvconfig.get_bool(kv, "no_rgb", False)),
        )
        if changes["scene"] is None or changes["rig"] is None:
            raise ConfigError("simulate needs --scene and --rig")
    else:
        changes = dict(scan=path("scan"), rig=path("rig"), frames=pick("frames", convert=int))
        if changes["scan"] is None:
            raise ConfigError(f"{args.command} needs --scan")
    if args.command == "process":
        changes.update(
            n_rays=pick("rays", convert=int) or 3000,
            threshold=pick("threshold", convert=float),
            ply_format=pick("format", "ply_format") or "binary",
            masks=bool(args.masks or kvconfig.get_bool(kv, "masks", False)),
        )
    if args.command == "report":
        rays = pick("rays")
        if rays:
            try:
                changes["ray_settings"] = tuple(int(v) for v in str(rays).split(","))
            except ValueError:
                raise ConfigError(f"--rays: expected comma-separated integers, got {rays!r}") from None
        changes["bench_frames"] = pick("bench_frames", convert=int) or 100
        if changes["bench_frames"] < 100:
            raise ConfigError("--bench-frames must be >= 100")
    return replace(cfg, **changes).validate()


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(cfg: RunConfig) -> int:
    scene = load_scene(cfg.scene)
    if cfg.noise is not None:
        scene = scene.with_noise(cfg.noise)
    if cfg.frames is not None:
        scene = scene.with_scan(frames=cfg.frames)
    rig, rgb_cam = kvconfig.load_rig(cfg.rig)
    if not cfg.rgb:
        rgb_cam = None
    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    save_scene(out / SCENE_COPY, scene)
    kvconfig.save_rig(out / RIG_COPY, rig, rgb_cam)
    entries = []
    trajectory = scene.scan.trajectory(rig.baseline)
    for bundle in simulate_scan(scene.pipe, trajectory, rig, rgb_cam, scene.laser, scene.wheel, scene.noise, cfg.seed):
        entries.append(scanio.write_frame(out, bundle))
        logger.debug("rendered frame %d", bundle.index)
    scanio.write_manifest(out, entries)
    logger.info("wrote %d frames to %s", len(entries), out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# process


def _scan_inputs(cfg: RunConfig):
    entries = scanio.read_manifest(cfg.scan)
    rig_path = cfg.rig or cfg.scan / RIG_COPY
    if not rig_path.is_file():
        raise ConfigError(f"no rig file: {rig_path}")
    rig, rgb_cam = kvconfig.load_rig(rig_path)
    scene_path = cfg.scan / SCENE_COPY
    scene = load_scene(scene_path) if scene_path.is_file() else None
    if cfg.frames is not None:
        entries = entries[: cfg.frames]
    return entries, rig, rgb_cam, scene


def _manifest_frames(cfg: RunConfig, entries, use_rgb: bool) -> Iterator[FrameBundle]:
    for e in entries:
        left = scanio.read_image(cfg.scan / e.left)
        right = scanio.read_image(cfg.scan / e.right)
        rgb = scanio.read_image(cfg.scan / e.rgb, color=True) if use_rgb and e.rgb else None
        if cfg.masks:
            try:
                mask = extract_mask(left, cfg.threshold).as_image()
            except PipeScanError:
                mask = np.zeros_like(left)
            scanio.write_image(cfg.out / "masks" / f"{e.frame_index:05d}_left.pgm", mask)
        yield FrameBundle(e.frame_index, left, right, rgb, e.pose, None, e.encoder_ticks)


def cmd_process(cfg: RunConfig) -> int:
    entries, rig, rgb_cam, scene = _scan_inputs(cfg)
    if scene is None:
        raise ConfigError(f"{cfg.scan / SCENE_COPY} is needed for the nominal diameter")
    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    settings = ProfilerSettings(n_rays=cfg.n_rays, threshold=cfg.threshold)
    result = reconstruct_scan(
        _manifest_frames(cfg, entries, rgb_cam is not None),
        rig,
        scene.pipe.nominal_diameter,
        scene.wheel,
        settings,
        rgb_cam,
        truth_pipe=scene.pipe,
    )
    pipe_map = result.pipe_map
    logger.info("%d of %d frames produced rings", len(pipe_map), result.frames)
    if len(pipe_map):
        _write_map_artifacts(cfg, pipe_map, result.truth_mm)
    _write_summary(out / "summary.txt", result.frames, len(pipe_map), len(result.failures), pipe_map, result.truth_mm)
    if result.ring_fraction < MIN_RING_FRACTION:
        logger.error("only %d of %d frames produced rings", len(pipe_map), result.frames)
        return EXIT_PROCESSING
    return EXIT_OK


def _write_map_artifacts(cfg: RunConfig, pipe_map: PipeMap, truth_mm: list[np.ndarray]) -> None:
    out, fmt = cfg.out, cfg.ply_format
    heat = compute_heatmap(pipe_map)
    scanio.write_rings_csv(out / "rings.csv", (r.profile for r in pipe_map.rings))
    pts, cols = pipe_map.cloud()
    export_ply(Mesh(pts, cols), out / "cloud.ply", fmt)
    export_ply(Mesh(pts, np.concatenate(heat.colors)), out / "heatmap_cloud.ply", fmt)
    if len(pipe_map) >= 2:
        export_ply(build_mesh(pipe_map), out / "mesh.ply", fmt)
        export_ply(build_mesh(pipe_map, "rgb"), out / "mesh_rgb.ply", fmt)
        export_ply(build_mesh(pipe_map, "heatmap", heat), out / "heatmap.ply", fmt)
        wire = build_mesh(pipe_map, wireframe=True)
        export_ply(Mesh(wire.vertices, edges=wire.edges), out / "wireframe.ply", fmt)
    nominal = compute_rmse(pipe_map)
    truth = compute_rmse(pipe_map, truth_mm)
    rows = []
    for i, ring in enumerate(pipe_map.rings):
        dmin, dmax = ring_diameters(ring.profile)
        err = np.max(np.abs(ring.profile.radius_mm - truth_mm[i]))
        rows.append([ring.profile.ring_index, ring.displacement, nominal.per_ring_mm[i], truth.per_ring_mm[i],
                     float(err), dmin, dmax])
    scanio.write_csv(
        out / "rmse.csv",
        ["ring_index", "axial_position_m", "rmse_nominal_mm", "rmse_truth_mm", "max_abs_error_mm",
         "diameter_min_mm", "diameter_max_mm"],
        rows,
    )
    scanio.write_csv(
        out / "defects.csv",
        ["region", "sign", "peak_deviation_mm", "axial_start_m", "axial_end_m", "angle_start_rad",
         "angle_end_rad", "first_ring", "last_ring", "cells"],
        [[k, r.sign, r.peak_deviation_mm, r.axial_range[0], r.axial_range[1], r.angular_range[0],
          r.angular_range[1], r.ring_range[0], r.ring_range[1], r.cells]
         for k, r in enumerate(pipe_map.defect_regions)],
    )


def _write_summary(path: Path, frames: int, rings: int, failures: int, pipe_map: PipeMap, truth_mm) -> None:
    lines = [f"frames = {frames}", f"rings = {rings}", f"failed_frames = {failures}",
             f"rejected_rings = {pipe_map.rejected}"]
    if rings:
        lines.append(f"global_rmse_nominal_mm = {compute_rmse(pipe_map).global_mm:.4f}")
        lines.append(f"global_rmse_truth_mm = {compute_rmse(pipe_map, truth_mm).global_mm:.4f}")
        lines.append(f"defect_regions = {len(pipe_map.defect_regions)}")
    try:
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc.strerror}") from exc


# ---------------------------------------------------------------------------
# report


REPORT_INPUTS = ("rmse.csv", "defects.csv", "summary.txt")


def cmd_report(cfg: RunConfig) -> int:
    out = cfg.out
    missing = [name for name in REPORT_INPUTS if not (out / name).is_file()]
    if missing:
        raise IoFailure(f"missing processed artifacts in {out}: {', '.join(missing)}")
    rmse_rows = scanio.read_csv(out / "rmse.csv")
    series = [[int(r["ring_index"]), float(r["axial_position_m"]), float(r["rmse_nominal_mm"]),
               float(r["rmse_truth_mm"])] for r in rmse_rows]
    scanio.write_csv(out / "rmse_series.csv",
                     ["ring_index", "axial_position_m", "rmse_nominal_mm", "rmse_truth_mm"], series)

    entries, rig, _, _ = _scan_inputs(replace(cfg, frames=None))
    distinct = entries[: cfg.frames or 10]
    frames = [(scanio.read_image(cfg.scan / e.left), scanio.read_image(cfg.scan / e.right)) for e in distinct]
    reports = measure_throughput(frames, rig, cfg.ray_settings, min_frames=cfg.bench_frames)
    slope, intercept, r2 = latency_fit(reports) if len(reports) >= 2 else (float("nan"),) * 3
    scanio.write_csv(
        out / "throughput.csv",
        ["points_per_frame", "frames", "measured_fps", "latency_ms", "median_latency_ms", "reference_fps", "latency_cv"]
        + [f"{k}_ms" for k in reports[0].stage_ms],
        [[r.points_per_frame, r.frames, r.measured_fps, r.latency_ms, r.median_latency_ms,
          REFERENCE_FPS.get(r.points_per_frame, ""), r.latency_cv] + list(r.stage_ms.values())
         for r in reports],
    )
    summary = kvconfig.load(out / "summary.txt")
    text = format_reports(reports)
    text += f"\nlatency fit: {slope * 1e3:.4f} ms per 1000 points + {intercept:.2f} ms, R^2 = {r2:.4f}\n"
    text += "".join(f"{k} = {v}\n" for k, v in summary.items())
    try:
        (out / "throughput.txt").write_text(text)
    except OSError as exc:
        raise IoFailure(f"cannot write {out / 'throughput.txt'}: {exc.strerror}") from exc
    sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "process": cmd_process, "report": cmd_report}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    try:
        cfg = make_config(args)
        return COMMANDS[cfg.command](cfg)
    except ConfigError as exc:
        logger.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except (IoFailure, ManifestError, OSError) as exc:
        logger.error("%s", exc)
        return EXIT_IO
    except PipeScanError as exc:
        logger.error("processing failed: %s: %s", type(exc).__name__, exc)
        return EXIT_PROCESSING


if __name__ == "__main__":
    sys.exit(main())
