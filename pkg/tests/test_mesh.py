import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from plyfile import PlyData

from pipescan.errors import AngularMismatch, IoFailure
from pipescan.mapping import PipeMap, accumulate_ring
from pipescan.mesh import Mesh, build_mesh, edge_face_counts, export_ply, mesh_edges, ply_bytes

from test_mapping import make_ring


def ring_map(m, n, gaps=None):
    """``m`` rings of ``n`` rays; ``gaps[i]`` lists rays missing on ring ``i``."""
    gaps = gaps or {}
    pm = PipeMap(0.3)
    for i in range(m):
        rays = np.setdiff1d(np.arange(n), gaps.get(i, []))
        accumulate_ring(pm, make_ring(150.0, n, i, rays), 0.002 * i)
    return pm


def count_by_enumeration(m, n, gaps=None):
    gaps = gaps or {}
    total = 0
    for i in range(m - 1):
        for k in range(n):
            corners = [(i, k), (i, (k + 1) % n), (i + 1, k), (i + 1, (k + 1) % n)]
            present = sum(c[1] not in gaps.get(c[0], []) for c in corners)
            total += {4: 2, 3: 1}.get(present, 0)
    return total


def test_two_rings_of_four():
    assert build_mesh(ring_map(2, 4)).n_faces == 8


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 8), st.integers(3, 40))
def test_closed_triangle_count(m, n):
    mesh = build_mesh(ring_map(m, n))
    assert mesh.n_faces == 2 * n * (m - 1) == count_by_enumeration(m, n)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 5), st.integers(6, 30), st.data())
def test_triangle_count_with_random_gaps(m, n, data):
    gaps = {i: data.draw(st.lists(st.integers(0, n - 1), max_size=n // 2, unique=True)) for i in range(m)}
    mesh = build_mesh(ring_map(m, n, gaps))
    assert mesh.n_faces == count_by_enumeration(m, n, gaps)
    assert np.all(mesh.faces >= 0) and np.all(mesh.faces < len(mesh.vertices))
    # no degenerate triangles
    assert np.all((mesh.faces[:, 0] != mesh.faces[:, 1]) & (mesh.faces[:, 1] != mesh.faces[:, 2])
                  & (mesh.faces[:, 0] != mesh.faces[:, 2]))


def test_three_ray_gap_removes_six_triangles():
    closed = build_mesh(ring_map(2, 36)).n_faces
    gapped = build_mesh(ring_map(2, 36, {1: [10, 11, 12]})).n_faces
    assert closed - gapped == 6


@pytest.mark.parametrize("m,n", [(2, 4), (5, 12), (7, 100)])
def test_interior_edges_shared_by_two_faces(m, n):
    counts = edge_face_counts(build_mesh(ring_map(m, n)).faces)
    # each quad owns its axial, diagonal and lower circumferential edge
    per_strip = 3 * n
    boundary = {e for e, c in counts.items() if c == 1}
    assert all(c in (1, 2) for c in counts.values())
    # only the circumferential edges of the first and last ring are open
    first = set(range(n))
    last = set(range((m - 1) * n, m * n))
    for a, b in boundary:
        assert {a, b} <= first or {a, b} <= last
    assert len(boundary) == 2 * n
    assert len(counts) == per_strip * (m - 1) + n


def test_mesh_validation():
    with pytest.raises(ValueError):
        build_mesh(ring_map(1, 8))
    with pytest.raises(ValueError):
        build_mesh(ring_map(2, 8), color="plaid")
    pm = PipeMap(0.3)
    accumulate_ring(pm, make_ring(150.0, 8), 0.0)
    accumulate_ring(pm, make_ring(150.0, 16, 1), 0.001)
    with pytest.raises(AngularMismatch):
        build_mesh(pm)


def test_color_modes_and_wireframe():
    pm = ring_map(3, 10)
    assert build_mesh(pm, "none").colors is None
    assert build_mesh(pm, "rgb").colors.shape == (30, 3)
    heat = build_mesh(pm, "heatmap")
    assert heat.colors.shape == (30, 3) and heat.colors.dtype == np.uint8
    wire = build_mesh(pm, wireframe=True)
    assert np.array_equal(wire.edges, mesh_edges(wire.faces))


# PLY


def test_single_point_ascii():
    text = ply_bytes(Mesh(np.array([[1.0, 2.0, 3.0]])), "ascii").decode()
    header, body = text.split("end_header\n")
    assert "element vertex 1" in header
    assert body.strip().split() == ["1.0", "2.0", "3.0"]


@pytest.mark.parametrize("mode", ["ascii", "binary"])
def test_empty_cloud(mode):
    data = ply_bytes(Mesh(np.empty((0, 3)), np.empty((0, 3), np.uint8)), mode)
    ply = PlyData.read(io.BytesIO(data))
    assert ply["vertex"].count == 0


@pytest.mark.parametrize("mode", ["ascii", "binary"])
def test_round_trip_through_reader(mode):
    rng = np.random.default_rng(8)
    verts = rng.uniform(-2, 2, (500, 3))
    cols = rng.integers(0, 256, (500, 3)).astype(np.uint8)
    mesh = build_mesh(ring_map(5, 100), "rgb", wireframe=True)
    mesh = Mesh(verts, cols, mesh.faces, mesh.edges)
    ply = PlyData.read(io.BytesIO(ply_bytes(mesh, mode)))
    v = ply["vertex"]
    got = np.column_stack([v["x"], v["y"], v["z"]])
    assert np.array_equal(got, verts.astype(np.float32))
    assert np.array_equal(np.column_stack([v["red"], v["green"], v["blue"]]), cols)
    faces = np.vstack(ply["face"]["vertex_indices"])
    assert np.array_equal(faces, mesh.faces)
    edges = np.column_stack([ply["edge"]["vertex1"], ply["edge"]["vertex2"]])
    assert np.array_equal(edges, mesh.edges)


def test_binary_output_is_deterministic(tmp_path):
    pm = ring_map(4, 64)
    a = export_ply(build_mesh(pm, "heatmap"), tmp_path / "a.ply")
    b = export_ply(build_mesh(ring_map(4, 64), "heatmap"), tmp_path / "b.ply")
    assert a.read_bytes() == b.read_bytes()


def test_export_failure_is_io_error(tmp_path):
    with pytest.raises(IoFailure):
        export_ply(Mesh(np.zeros((1, 3))), tmp_path / "missing" / "x.ply")
    with pytest.raises(ValueError):
        ply_bytes(Mesh(np.zeros((1, 3))), "hex")
