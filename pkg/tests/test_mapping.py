import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pipescan.errors import AngularMismatch, NonMonotoneOdometry
from pipescan.mapping import (
    HeatMapStyle,
    PipeMap,
    accumulate_ring,
    compute_heatmap,
    compute_rmse,
    deviation_grid,
    find_defect_regions,
    ring_diameters,
)
from pipescan.odometry import WheelSpec, advance_odometry, ring_spacing
from pipescan.profiling import RingProfile


def make_ring(radius_mm, n_rays=360, index=0, ray_index=None, depth=0.15):
    """Ring whose radius per ray is ``radius_mm`` (scalar, array or f(angle))."""
    ray_index = np.arange(n_rays) if ray_index is None else np.asarray(ray_index)
    a = ray_index * 2 * np.pi / n_rays
    r = radius_mm(a) if callable(radius_mm) else np.broadcast_to(np.asarray(radius_mm, float), a.shape)
    pts = np.column_stack([1e-3 * r * np.cos(a), 1e-3 * r * np.sin(a), np.full(len(a), depth)])
    return RingProfile(index, 0.0, n_rays, ray_index, pts, np.array(r, float), np.array([0.0, 0.0, depth]))


def bump(center, width, magnitude):
    def f(a):
        u = np.angle(np.exp(1j * (a - center))) / (0.5 * width)
        return np.where(np.abs(u) < 1, 0.5 * (1 + np.cos(np.pi * u)), 0.0) * magnitude

    return f


def planted_map(defects, rings=60, spacing=0.002, n_rays=720):
    """Map of a 300 mm bore with raised-cosine defects ``(ring, angle, rings_wide, rad_wide, signed_mm)``."""
    m = PipeMap(0.3)
    for i in range(rings):
        def radius(a, i=i):
            r = np.full_like(a, 150.0)
            for ring, ang, rw, aw, mag in defects:
                along = max(0.0, 1 - abs(i - ring) / (0.5 * rw))
                r += 0.5 * (1 - np.cos(np.pi * along)) * bump(ang, aw, mag)(a)
            return r

        accumulate_ring(m, make_ring(radius, n_rays, i), i * spacing)
    return m


# odometry


def test_odometry_examples():
    w = WheelSpec()
    assert advance_odometry(0, w) == 0.0
    assert advance_odometry(500, WheelSpec(0.35, 1000)) == pytest.approx(0.175, abs=1e-15)
    with pytest.raises(ValueError):
        advance_odometry(-1, w)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 5000), min_size=1, max_size=40))
def test_odometry_is_additive(ticks):
    w = WheelSpec()
    parts = sum(advance_odometry(t, w) for t in ticks)
    assert parts == pytest.approx(advance_odometry(sum(ticks), w), rel=1e-12, abs=1e-15)


def test_ring_spacing_for_slow_traverse():
    # 0.2 m/min at 30 fps
    assert ring_spacing(0.2, 30) * 1e3 == pytest.approx(0.1111, abs=1e-4)


# accumulation


def test_first_ring_makes_one_ring_map():
    m = accumulate_ring(PipeMap(0.3), make_ring(150.0), 0.0)
    assert len(m) == 1
    assert m.rings[0].profile.deviation_mm is not None
    assert np.allclose(m.rings[0].profile.deviation_mm, 0.0)


def test_regression_beyond_slip_tolerance_rejected():
    w = WheelSpec()
    m = PipeMap(0.3, w)
    accumulate_ring(m, make_ring(150.0), 0.1)
    with pytest.raises(NonMonotoneOdometry):
        accumulate_ring(m, make_ring(150.0, index=1), 0.1 - 3 * w.meters_per_tick)
    assert len(m) == 1 and m.rejected == 1


def test_small_regression_clamped():
    w = WheelSpec()
    m = PipeMap(0.3, w)
    accumulate_ring(m, make_ring(150.0), 0.1)
    accumulate_ring(m, make_ring(150.0, index=1), 0.1 - 2 * w.meters_per_tick)
    assert m.axial_positions().tolist() == [0.1, 0.1]


def test_world_points_are_pure_translation():
    m = PipeMap(0.3)
    ring = make_ring(lambda a: 150 + np.sin(3 * a))
    accumulate_ring(m, ring, 0.25)
    diff = m.rings[0].world_points - ring.points
    assert np.allclose(diff, [0.0, 0.0, 0.25], atol=1e-15)
    assert m.rings[0].world_z == pytest.approx(0.25 + 0.15)
    pts, cols = m.cloud()
    assert pts.shape == (360, 3) and cols.shape == (360, 3)


def test_mismatched_ray_counts():
    m = PipeMap(0.3)
    accumulate_ring(m, make_ring(150.0, 360), 0.0)
    accumulate_ring(m, make_ring(150.0, 720, 1), 0.001)
    with pytest.raises(AngularMismatch):
        deviation_grid(m)


# heat map and defects


def test_heatmap_buckets_monotone_in_magnitude():
    style = HeatMapStyle()
    dev = np.linspace(-15, 15, 3001)
    order = np.argsort(np.abs(dev), kind="stable")
    assert np.all(np.diff(style.bucket(dev[order])) >= 0)
    assert style.bucket([0.0, 0.99, 1.0, 2.9, 3.0, 6.5, 10.0, 11.0]).tolist() == [0, 0, 1, 1, 2, 3, 4, 4]
    assert tuple(style.color(0.0)) == style.colors[0]


@settings(max_examples=200, deadline=None)
@given(st.floats(-50, 50), st.floats(-50, 50))
def test_heatmap_larger_deviation_never_lower_bucket(a, b):
    style = HeatMapStyle()
    if abs(a) <= abs(b):
        assert style.bucket(a) <= style.bucket(b)


def test_style_validation():
    with pytest.raises(ValueError):
        HeatMapStyle(edges_mm=(1.0, 3.0), colors=((0, 0, 0),))
    with pytest.raises(ValueError):
        HeatMapStyle(edges_mm=(3.0, 1.0), colors=((0, 0, 0),) * 3)


def test_defect_free_map_is_base_colored():
    m = planted_map([], rings=20)
    heat = compute_heatmap(m)
    assert heat.regions == [] and m.defect_regions == []
    for c in heat.colors:
        assert np.all(c == HeatMapStyle().colors[0])


def test_planted_protrusion_gives_one_region():
    m = planted_map([(30, 1.0, 15, 0.35, -3.0)])
    regions = compute_heatmap(m).regions
    assert len(regions) == 1
    r = regions[0]
    assert r.sign == -1
    assert abs(r.peak_deviation_mm + 3.0) <= 1.0
    assert r.angular_range[0] < 1.0 < r.angular_range[1]
    assert r.ring_range[0] <= 30 <= r.ring_range[1]


def test_planted_protrusion_and_hole_have_opposite_signs():
    m = planted_map([(15, np.pi, 15, 0.35, -10.0), (45, np.pi / 4, 15, 0.35, 3.0)])
    regions = compute_heatmap(m).regions
    assert len(regions) == 2
    by_sign = {r.sign: r for r in regions}
    assert abs(by_sign[-1].peak_deviation_mm + 10.0) <= 1.0
    assert abs(by_sign[1].peak_deviation_mm - 3.0) <= 1.0


def test_region_across_ray_zero_is_one_region():
    m = planted_map([(30, 0.0, 15, 0.35, 4.0)])
    regions = find_defect_regions(m)
    assert len(regions) == 1
    start, end = regions[0].angular_range
    assert np.pi < start < 2 * np.pi < end < 2 * np.pi + 1.0


def test_heatmap_colors_follow_deviation():
    m = planted_map([(30, 1.0, 15, 0.35, -8.0)])
    heat = compute_heatmap(m)
    style = HeatMapStyle()
    peak_ring = heat.colors[30]
    assert tuple(peak_ring[int(round(1.0 / (2 * np.pi) * 720))]) == style.colors[3]
    assert tuple(peak_ring[int(round((1.0 + np.pi) / (2 * np.pi) * 720))]) == style.colors[0]


# rmse


def test_rmse_zero_and_constant_offset():
    m = PipeMap(0.3)
    for i in range(3):
        accumulate_ring(m, make_ring(150.0, index=i), 0.001 * i)
    rep = compute_rmse(m)
    assert rep.global_mm == 0.0 and np.all(rep.per_ring_mm == 0.0)
    m = PipeMap(0.3)
    for i in range(3):
        accumulate_ring(m, make_ring(151.0, index=i), 0.001 * i)
    assert compute_rmse(m).global_mm == pytest.approx(1.0, abs=1e-12)


def test_rmse_against_own_radii_is_zero():
    m = planted_map([(30, 1.0, 15, 0.35, -3.0)], rings=40)
    rep = compute_rmse(m, [r.profile.radius_mm for r in m.rings])
    assert rep.global_mm == 0.0
    assert compute_rmse(m, lambda r: r.profile.radius_mm).global_mm == 0.0


def test_rmse_oracle_per_ring():
    rng = np.random.default_rng(4)
    radii = [150 + rng.normal(0, 0.5, 360) for _ in range(5)]
    m = PipeMap(0.3)
    for i, r in enumerate(radii):
        accumulate_ring(m, make_ring(r, index=i), 0.001 * i)
    rep = compute_rmse(m)
    want = [np.sqrt(np.mean((r - 150) ** 2)) for r in radii]
    assert np.allclose(rep.per_ring_mm, want, rtol=1e-12)
    assert rep.global_mm == pytest.approx(np.mean(want), rel=1e-12)


def test_rmse_excludes_defect_footprint():
    m = planted_map([(30, 1.0, 15, 0.35, -3.0)])
    compute_heatmap(m)
    rep = compute_rmse(m)
    assert rep.excluded_points > 0
    assert rep.global_mm < 0.05


def test_rmse_needs_rings():
    with pytest.raises(ValueError):
        compute_rmse(PipeMap(0.3))


def test_ring_diameters_of_ellipse():
    ring = make_ring(lambda a: 150 + 0.8 * np.cos(2 * (a - 0.4)))
    dmin, dmax = ring_diameters(ring)
    assert dmin == pytest.approx(298.4, abs=1e-4)
    assert dmax == pytest.approx(301.6, abs=1e-4)
    assert ring_diameters(make_ring(150.0)) == pytest.approx((300.0, 300.0))
