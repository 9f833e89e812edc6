"""Analytic test shapes, as occupancy grids and as triangle meshes."""

from __future__ import annotations

import numpy as np

from .core import VoxelGrid

__all__ = ["sphere_grid", "box_grid", "pocket_box_grid", "box_mesh", "sphere_mesh"]


def _centers(n: int):
    return np.meshgrid(*(np.arange(n, dtype=np.float64),) * 3, indexing="ij")


def sphere_grid(n: int, radius: float, center=None) -> VoxelGrid:
    """Solid sphere: voxels whose centers lie within ``radius`` of ``center``.

    ``center`` defaults to the grid center ``(n-1)/2``.
    """
    c = np.full(3, (n - 1) / 2.0) if center is None else np.asarray(center, dtype=np.float64)
    x, y, z = _centers(n)
    inside = (x - c[0]) ** 2 + (y - c[1]) ** 2 + (z - c[2]) ** 2 <= radius**2
    return VoxelGrid(inside.astype(np.float32))


def box_grid(n: int, lo, hi) -> VoxelGrid:
    """Axis-aligned box covering voxel indices ``lo[i] <= idx < hi[i]``."""
    v = np.zeros((n, n, n), dtype=np.float32)
    v[lo[0] : hi[0], lo[1] : hi[1], lo[2] : hi[2]] = 1
    return VoxelGrid(v)


def pocket_box_grid(n: int, lo, hi, wall: int) -> VoxelGrid:
    """Box ``lo <= idx < hi`` with a pocket opening toward the view-0 camera (low ``z``).

    The pocket leaves ``wall`` voxels of material on the four sides and at
    the back of the box.
    """
    v = np.asarray(box_grid(n, lo, hi)).copy()
    v[0, lo[0] + wall : hi[0] - wall, lo[1] + wall : hi[1] - wall, lo[2] : hi[2] - wall] = 0
    return VoxelGrid(v)


def box_mesh(lo=(-1.0, -1.0, -1.0), hi=(1.0, 1.0, 1.0)):
    """Closed axis-aligned box as ``(vertices, triangles)`` with outward winding."""
    (x0, y0, z0), (x1, y1, z1) = lo, hi
    vertices = np.array(
        [
            [x0, y0, z0], [x1, y0, z0], [x1, y1, z0], [x0, y1, z0],
            [x0, y0, z1], [x1, y0, z1], [x1, y1, z1], [x0, y1, z1],
        ],
        dtype=np.float64,
    )
    quads = [(0, 3, 2, 1), (4, 5, 6, 7), (0, 1, 5, 4), (2, 3, 7, 6), (1, 2, 6, 5), (0, 4, 7, 3)]
    triangles = []
    for a, b, c, d in quads:
        triangles += [(a, b, c), (a, c, d)]
    return vertices, np.array(triangles, dtype=np.int64)


def sphere_mesh(radius: float = 1.0, n_lat: int = 24, n_lon: int = 48):
    """Closed UV sphere centered at the origin as ``(vertices, triangles)``."""
    vertices = [[0.0, radius, 0.0]]
    for i in range(1, n_lat):
        polar = np.pi * i / n_lat
        for j in range(n_lon):
            az = 2 * np.pi * j / n_lon
            vertices.append(
                [radius * np.sin(polar) * np.cos(az), radius * np.cos(polar), radius * np.sin(polar) * np.sin(az)]
            )
    vertices.append([0.0, -radius, 0.0])
    bottom = len(vertices) - 1

    def ring(i, j):
        return 1 + (i - 1) * n_lon + (j % n_lon)

    triangles = []
    for j in range(n_lon):
        triangles.append((0, ring(1, j + 1), ring(1, j)))
        triangles.append((bottom, ring(n_lat - 1, j), ring(n_lat - 1, j + 1)))
    for i in range(1, n_lat - 1):
        for j in range(n_lon):
            a, b = ring(i, j), ring(i, j + 1)
            c, d = ring(i + 1, j), ring(i + 1, j + 1)
            triangles += [(a, b, d), (a, d, c)]
    return np.array(vertices, dtype=np.float64), np.array(triangles, dtype=np.int64)
