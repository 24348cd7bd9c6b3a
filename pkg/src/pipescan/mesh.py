"""Triangle meshes over the ring map and PLY export."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import AngularMismatch, IoFailure
from .mapping import HeatMap, PipeMap, compute_heatmap


@dataclass(frozen=True, eq=False)
class Mesh:
    """Vertices ``(N, 3)``, optional colors ``(N, 3)`` uint8, triangles ``(M, 3)``
    and wireframe edges ``(K, 2)``. A point cloud is a mesh without faces."""

    vertices: np.ndarray
    colors: np.ndarray | None = None
    faces: np.ndarray | None = None
    edges: np.ndarray | None = None

    @property
    def n_faces(self) -> int:
        return 0 if self.faces is None else len(self.faces)


def _quad_triangles(grid: np.ndarray) -> np.ndarray:
    """Triangles of every quad of a ``(rings, n)`` vertex-index grid (-1 = missing).

    A full quad (a0, a1 on one ring; b0, b1 on the next) splits along the
    a1-b0 diagonal. With one corner missing the triangle of the other three
    is kept; with two or more the quad is a hole.
    """
    if grid.shape[0] < 2:
        return np.empty((0, 3), np.int64)
    a0, b0 = grid[:-1], grid[1:]
    a1, b1 = np.roll(a0, -1, axis=1), np.roll(b0, -1, axis=1)
    present = np.stack([a0, b0, a1, b1]) >= 0
    n_missing = 4 - present.sum(axis=0)
    full = n_missing == 0
    tris = [
        np.column_stack([a0[full], b0[full], a1[full]]),
        np.column_stack([a1[full], b0[full], b1[full]]),
    ]
    one = n_missing == 1
    if one.any():
        corners = np.stack([a0[one], b0[one], a1[one], b1[one]], axis=1)
        keep = corners >= 0
        tris.append(corners[keep].reshape(-1, 3))
    out = np.concatenate(tris) if tris else np.empty((0, 3), np.int64)
    # order faces by quad for stable output
    return out[np.lexsort((out[:, 2], out[:, 1], out[:, 0]))]


def build_mesh(
    pipe_map: PipeMap,
    color: str = "none",
    heatmap: HeatMap | None = None,
    wireframe: bool = False,
) -> Mesh:
    """Quad-strip mesh between consecutive rings.

    ``color`` is ``"none"``, ``"rgb"`` (colors sampled from the RGB frames)
    or ``"heatmap"`` (computed if ``heatmap`` is not given). Rays missing on
    a ring leave holes rather than degenerate triangles.

    Raises:
        AngularMismatch: rings use different ray counts.
        ValueError: fewer than 2 rings, or an unknown ``color`` mode.
    """
    if color not in ("none", "rgb", "heatmap"):
        raise ValueError(f"unknown color mode {color!r}")
    rings = pipe_map.rings
    if len(rings) < 2:
        raise ValueError(f"a mesh needs at least 2 rings, map has {len(rings)}")
    n = rings[0].profile.n_rays
    for prev, cur in zip(rings, rings[1:]):
        if cur.profile.n_rays != prev.profile.n_rays:
            raise AngularMismatch(
                f"ring {cur.profile.ring_index} has {cur.profile.n_rays} rays, "
                f"ring {prev.profile.ring_index} has {prev.profile.n_rays}"
            )
    grid = np.full((len(rings), n), -1, np.int64)
    start = 0
    for i, r in enumerate(rings):
        grid[i, r.profile.ray_index] = start + np.arange(len(r.profile))
        start += len(r.profile)
    vertices, rgb = pipe_map.cloud()
    colors = None
    if color == "rgb":
        colors = rgb
    elif color == "heatmap":
        heatmap = heatmap or compute_heatmap(pipe_map)
        colors = np.concatenate(heatmap.colors)
    faces = _quad_triangles(grid)
    edges = mesh_edges(faces) if wireframe else None
    return Mesh(vertices, colors, faces, edges)


def mesh_edges(faces: np.ndarray) -> np.ndarray:
    """Unique undirected edges ``(K, 2)`` of a triangle list, smaller index first."""
    if len(faces) == 0:
        return np.empty((0, 2), np.int64)
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    e.sort(axis=1)
    return np.unique(e, axis=0)


def edge_face_counts(faces: np.ndarray) -> dict[tuple[int, int], int]:
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    e.sort(axis=1)
    uniq, counts = np.unique(e, axis=0, return_counts=True)
    return {(int(a), int(b)): int(c) for (a, b), c in zip(uniq, counts)}


# ---------------------------------------------------------------------------
# PLY


def _header(mesh: Mesh, fmt: str) -> bytes:
    lines = ["ply", f"format {fmt} 1.0", "comment pipe profile", f"element vertex {len(mesh.vertices)}"]
    lines += ["property float x", "property float y", "property float z"]
    if mesh.colors is not None:
        lines += ["property uchar red", "property uchar green", "property uchar blue"]
    if mesh.faces is not None:
        lines += [f"element face {len(mesh.faces)}", "property list uchar int vertex_indices"]
    if mesh.edges is not None:
        lines += [f"element edge {len(mesh.edges)}", "property int vertex1", "property int vertex2"]
    lines.append("end_header")
    return ("\n".join(lines) + "\n").encode("ascii")


def _vertex_record(mesh: Mesh) -> np.ndarray:
    fields = [("x", "<f4"), ("y", "<f4"), ("z", "<f4")]
    if mesh.colors is not None:
        fields += [("red", "u1"), ("green", "u1"), ("blue", "u1")]
    rec = np.empty(len(mesh.vertices), dtype=fields)
    v = np.asarray(mesh.vertices, dtype=np.float32).reshape(-1, 3)
    rec["x"], rec["y"], rec["z"] = v[:, 0], v[:, 1], v[:, 2]
    if mesh.colors is not None:
        c = np.asarray(mesh.colors, dtype=np.uint8).reshape(-1, 3)
        rec["red"], rec["green"], rec["blue"] = c[:, 0], c[:, 1], c[:, 2]
    return rec


def ply_bytes(mesh: Mesh, mode: str = "binary") -> bytes:
    """Serialize ``mesh`` as PLY; ``mode`` is ``"ascii"`` or ``"binary"``
    (little-endian)."""
    if mode not in ("ascii", "binary"):
        raise ValueError(f"mode must be 'ascii' or 'binary', got {mode!r}")
    fmt = "ascii" if mode == "ascii" else "binary_little_endian"
    out = [_header(mesh, fmt)]
    verts = _vertex_record(mesh)
    faces = None if mesh.faces is None else np.asarray(mesh.faces, dtype=np.int64).reshape(-1, 3)
    edges = None if mesh.edges is None else np.asarray(mesh.edges, dtype=np.int64).reshape(-1, 2)
    if mode == "binary":
        out.append(verts.tobytes())
        if faces is not None:
            rec = np.empty(len(faces), dtype=[("n", "u1"), ("idx", "<i4", (3,))])
            rec["n"], rec["idx"] = 3, faces
            out.append(rec.tobytes())
        if edges is not None:
            out.append(edges.astype("<i4").tobytes())
        return b"".join(out)
    lines = []
    xyz = np.column_stack([verts["x"], verts["y"], verts["z"]])
    for i, p in enumerate(xyz):
        row = " ".join(repr(float(v)) for v in p)
        if mesh.colors is not None:
            row += f" {verts['red'][i]} {verts['green'][i]} {verts['blue'][i]}"
        lines.append(row)
    if faces is not None:
        lines += [f"3 {a} {b} {c}" for a, b, c in faces.tolist()]
    if edges is not None:
        lines += [f"{a} {b}" for a, b in edges.tolist()]
    if lines:
        out.append(("\n".join(lines) + "\n").encode("ascii"))
    return b"".join(out)


def export_ply(mesh: Mesh, path: str | Path, mode: str = "binary") -> Path:
    """Write ``mesh`` to ``path`` as PLY.

    Raises:
        IoFailure: the file cannot be written.
    """
    path = Path(path)
    data = ply_bytes(mesh, mode)
    try:
        path.write_bytes(data)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path
