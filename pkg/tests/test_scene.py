import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pipescan import presets
from pipescan.errors import ConfigError, OutOfBore
from pipescan.geometry import project_points
from pipescan.odometry import WheelSpec, encoder_ticks
from pipescan.profiling import bilinear
from pipescan.scene import (
    DefectSpec,
    LaserPlane,
    NoiseParams,
    PipeSpec,
    ScanPose,
    WallTexture,
    centered_pose,
    load_scene,
    render_ir_frame,
    render_rgb_frame,
    ring_ground_truth,
    save_scene,
    simulate_scan,
    straight_trajectory,
)

from conftest import render_pair


def test_plain_pipe_truth_radii_exact(plain_pipe):
    truth = ring_ground_truth(plain_pipe, ScanPose(0.3), LaserPlane(), 720)
    assert np.all(truth.radii == 0.150)
    assert np.allclose(np.hypot(truth.pipe_points[:, 0], truth.pipe_points[:, 1]), 0.150, atol=1e-12)


def test_protrusion_minimum_radius_at_center():
    d = DefectSpec("protrusion", 0.45, 0.0, 0.04, 0.4, 0.003)
    pipe = PipeSpec(0.300, 1.0, (d,))
    # camera placed so the laser plane passes through the defect center
    truth = ring_ground_truth(pipe, ScanPose(0.30), LaserPlane(0.15), 3600)
    assert truth.radii.min() == pytest.approx(0.147, abs=1e-12)
    inside = np.abs(np.angle(np.exp(1j * truth.angles))) < 0.2
    assert np.all(truth.radii[~inside] == 0.150)


def test_lateral_offset_shifts_points_not_radii(plain_pipe):
    a = ring_ground_truth(plain_pipe, ScanPose(0.3), LaserPlane(), 360)
    b = ring_ground_truth(plain_pipe, ScanPose(0.3, (0.005, 0.0)), LaserPlane(), 360)
    assert np.array_equal(a.radii, b.radii)
    assert np.allclose(b.points - a.points, [-0.005, 0.0, 0.0], atol=1e-12)


def test_truth_points_on_surface_with_defects():
    scene = presets.table1_scene()
    for z in (0.1, 0.26, 0.34, 0.42):
        t = ring_ground_truth(scene.pipe, ScanPose(z - 0.15, (0.01, -0.004), (0.02, -0.03)), scene.laser)
        wall = scene.pipe.radius_at(t.pipe_points[:, 2], np.arctan2(t.pipe_points[:, 1], t.pipe_points[:, 0]))
        assert np.max(np.abs(np.hypot(t.pipe_points[:, 0], t.pipe_points[:, 1]) - wall)) < 1e-12


def test_defect_deviation_exact_at_center_and_zero_outside():
    for kind, sign in (("protrusion", -1), ("hole", 1)):
        d = DefectSpec(kind, 0.5, 1.0, 0.04, 0.3, 0.004)
        assert d.deviation(0.5, 1.0, 0.15) == pytest.approx(sign * 0.004, abs=1e-15)
        assert d.deviation(0.5 + 0.021, 1.0, 0.15) == 0.0
        assert d.deviation(0.5, 1.0 + 0.151, 0.15) == 0.0


def test_pose_outside_bore_rejected(plain_pipe):
    with pytest.raises(OutOfBore):
        ring_ground_truth(plain_pipe, ScanPose(0.3, (0.2, 0.0)), LaserPlane())


def test_defect_validation():
    with pytest.raises(ConfigError):
        DefectSpec("crack", 0.1, 0.0, 0.1, 0.1, 0.001)
    with pytest.raises(ConfigError):
        DefectSpec("hole", 0.1, 0.0, 0.0, 0.1, 0.001)
    with pytest.raises(ConfigError):
        PipeSpec(0.3, 1.0, (DefectSpec("hole", 1.5, 0.0, 0.1, 0.1, 0.001),))


def test_ir_ridge_lands_on_projected_truth(noiseless_bundle, rig):
    truth = noiseless_bundle.ring_truth
    for img, cam in ((noiseless_bundle.left_ir, rig.left), (noiseless_bundle.right_ir, rig.right)):
        px = project_points(truth.points[::10], cam)
        # the intensity ridge through each projected point peaks within 0.5 px along the normal
        c = px - np.array([cam.intrinsics.cx, cam.intrinsics.cy])
        c = c.mean(axis=0) + np.array([cam.intrinsics.cx, cam.intrinsics.cy])
        normal = (px - c) / np.linalg.norm(px - c, axis=1, keepdims=True)
        offsets = np.linspace(-2, 2, 81)
        samples = px[:, None, :] + offsets[None, :, None] * normal[:, None, :]
        prof = bilinear(img, samples[..., 0].ravel(), samples[..., 1].ravel()).reshape(samples.shape[:2])
        peak = offsets[np.argmax(prof, axis=1)]
        assert np.max(np.abs(peak)) < 0.5


def test_stereo_rows_agree_for_rendered_ring(noiseless_bundle, rig):
    pl = project_points(noiseless_bundle.ring_truth.points, rig.left)
    pr = project_points(noiseless_bundle.ring_truth.points, rig.right)
    assert np.max(np.abs(pl[:, 1] - pr[:, 1])) < 0.5


def test_uniform_texture_rgb_is_uniform(rgb_cam):
    pipe = PipeSpec(0.3, 1.0, (), WallTexture((120, 130, 140)))
    img = render_rgb_frame(pipe, centered_pose(0.5, 0.08), rgb_cam).reshape(-1, 3)
    # rays running out of the far end of the pipe see nothing
    wall = np.any(img != 0, axis=1)
    assert wall.mean() > 0.9
    assert np.all(img[wall] == (120, 130, 140))


def test_rgb_unaffected_by_laser(rig, rgb_cam):
    pipe = presets.table1_scene().pipe
    on = render_pair(pipe, rig, z=0.2, rgb_cam=rgb_cam, plane=LaserPlane(power=1.0))
    off = render_pair(pipe, rig, z=0.2, rgb_cam=rgb_cam, plane=LaserPlane(power=0.0))
    assert on.left_ir.max() > 200 and off.left_ir.max() < 20
    assert np.array_equal(on.rgb, off.rgb)


def test_red_stripe_appears_where_projection_says(rgb_cam):
    stripe = 0.8
    pipe = PipeSpec(0.3, 1.0, (), WallTexture((150, 150, 150), ((stripe, 0.08, (220, 20, 20)),)))
    pose = centered_pose(0.3, 0.08)
    img = render_rgb_frame(pipe, pose, rgb_cam)
    wall = np.array([[0.15 * np.cos(stripe), 0.15 * np.sin(stripe), 0.3 + z] for z in (0.2, 0.3, 0.5)])
    px = project_points(pose.pipe_to_camera(wall), rgb_cam)
    assert np.all((px >= 0) & (px < [640, 480]))
    for u, v in px:
        assert tuple(img[int(round(v)), int(round(u))]) == (220, 20, 20)
    off = np.array([[0.15 * np.cos(stripe + 1.0), 0.15 * np.sin(stripe + 1.0), 0.5]])
    u, v = project_points(pose.pipe_to_camera(off), rgb_cam)[0]
    assert tuple(img[int(round(v)), int(round(u))]) == (150, 150, 150)


def test_noise_is_seeded(plain_pipe, rig):
    a = render_pair(plain_pipe, rig, noise=NoiseParams(), seed=4)
    b = render_pair(plain_pipe, rig, noise=NoiseParams(), seed=4)
    c = render_pair(plain_pipe, rig, noise=NoiseParams(), seed=5)
    assert np.array_equal(a.left_ir, b.left_ir)
    assert not np.array_equal(a.left_ir, c.left_ir)


def test_dark_frame_when_laser_off(plain_pipe, rig):
    img = render_ir_frame(plain_pipe, ScanPose(0.3), LaserPlane(power=0.0), rig.left, NoiseParams.none())
    assert img.max() == 8


def test_two_pose_scan_has_monotone_ticks(plain_pipe, rig):
    traj = straight_trajectory(0.1, 0.002, 2, rig.baseline)
    bundles = list(simulate_scan(plain_pipe, traj, rig, None, LaserPlane(), noise=NoiseParams.none()))
    assert len(bundles) == 2
    assert bundles[1].encoder_ticks >= bundles[0].encoder_ticks
    assert bundles[0].rgb is None


def test_scan_requires_increasing_positions(plain_pipe, rig):
    traj = [ScanPose(0.2), ScanPose(0.2)]
    with pytest.raises(ValueError):
        list(simulate_scan(plain_pipe, traj, rig, None, LaserPlane()))


def test_encoder_rounding_at_fine_spacing():
    # 0.111 mm steps are a third of a tick on a 0.35 m / 1000 ppr wheel
    wheel = WheelSpec()
    spacing = 0.2 / 60 / 30
    z = np.arange(60) * spacing
    ticks = [encoder_ticks(v, wheel) for v in z]
    oracle = [int(np.floor(v / 0.35 * 1000 + 0.5)) for v in z]
    assert ticks == oracle
    assert set(np.diff(ticks)) <= {0, 1}


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=2, max_size=50, unique=True))
def test_ticks_non_decreasing_along_trajectory(zs):
    wheel = WheelSpec()
    ticks = [encoder_ticks(z, wheel) for z in sorted(zs)]
    assert all(b >= a for a, b in zip(ticks, ticks[1:]))


def test_defect_free_scan_truth_is_cylinder(plain_pipe, rig):
    traj = straight_trajectory(0.0, 0.2, 5, rig.baseline)
    radii = np.concatenate([ring_ground_truth(plain_pipe, p, LaserPlane()).radii for p in traj])
    assert np.max(np.abs(radii - 0.15)) == 0.0


def test_scene_file_round_trip(tmp_path):
    for scene in (presets.table1_scene(), presets.corroded_scene(), presets.plain_scene()):
        path = tmp_path / "s.scene"
        save_scene(path, scene)
        back = load_scene(path)
        assert back.pipe.defects == scene.pipe.defects
        assert back.pipe.nominal_diameter == scene.pipe.nominal_diameter
        assert back.laser == scene.laser
        assert back.noise == scene.noise
        assert back.scan == scene.scan
        assert back.wheel == scene.wheel
