"""Conforming triangulations with uniform and newest-vertex-bisection refinement.

Local edge i of a triangle is opposite local vertex i and runs from vertex
i+1 to vertex i+2 (mod 3). Global edges are oriented from the lower to the
higher vertex index; their unit normal is the tangent rotated by -90 degrees.

Copyright (C) 2025 mixedeig Contributors

This program is free software: you can redistribute it and/or modify
it under the terms of the GNU General Public License as published by
the Free Software Foundation, either version 3 of the License, or
(at your option) any later version.

This program is distributed in the hope that it will be useful,
but WITHOUT ANY WARRANTY; without even the implied warranty of
MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
GNU General Public License for more details.

You should have received a copy of the GNU General Public License
along with this program.  If not, see <https://www.gnu.org/licenses/>.
"""

from functools import cached_property
import logging
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

from mixedeig.constants import GEOMETRY_TOL
from mixedeig.exceptions import MeshError

logger = logging.getLogger(__name__)


class Point2(NamedTuple):
    """A point in the plane."""
    x: float
    y: float


def _readonly(array: np.ndarray) -> np.ndarray:
    array.flags.writeable = False
    return array


class Mesh:
    """Immutable conforming triangulation.

    Attributes:
        vertices: Vertex coordinates, shape (nV, 2).
        triangles: Counter-clockwise vertex triples, shape (nT, 3).
        edges: Sorted vertex pairs, shape (nE, 2).
        edge_of_triangle: Global edge of every local edge, shape (nT, 3).
        edge_sign: +1 where the local edge direction matches the global one.
        boundary_edge: True for edges with a single adjacent triangle.
        edge_triangles: Adjacent triangles per edge, -1 if absent, shape (nE, 2).
        edge_local: Local edge index within edge_triangles, shape (nE, 2).
        level: Refinement generation per triangle.
        refinement_edge: Local index of the bisection edge per triangle.
    """

    def __init__(
        self,
        vertices,
        triangles,
        level=None,
        refinement_edge=None,
    ) -> None:
        self.vertices = _readonly(np.array(vertices, dtype=float).reshape(-1, 2))
        self.triangles = _readonly(np.array(triangles, dtype=np.int64).reshape(-1, 3))
        n_triangles = len(self.triangles)
        if n_triangles == 0:
            raise MeshError("Mesh has no triangles")
        if self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices):
            raise MeshError("Triangle references a vertex that does not exist")
        if not np.all(np.isfinite(self.vertices)):
            raise MeshError("Vertex coordinates must be finite")
        if np.any(self.areas <= GEOMETRY_TOL * self.diameters**2):
            bad = int(np.argmin(self.areas))
            raise MeshError(f"Triangle {bad} is degenerate or clockwise (area {self.areas[bad]:.3e})")

        if level is None:
            level = np.zeros(n_triangles, dtype=np.int64)
        self.level = _readonly(np.array(level, dtype=np.int64).reshape(n_triangles))
        if refinement_edge is None:
            refinement_edge = longest_edges(self.vertices, self.triangles)
        self.refinement_edge = _readonly(
            np.array(refinement_edge, dtype=np.int64).reshape(n_triangles)
        )
        self._build_topology()

    def _build_topology(self) -> None:
        tri = self.triangles
        local = np.stack([tri[:, [1, 2]], tri[:, [2, 0]], tri[:, [0, 1]]], axis=1)
        edges, inverse, counts = np.unique(
            np.sort(local, axis=2).reshape(-1, 2),
            axis=0,
            return_inverse=True,
            return_counts=True,
        )
        if counts.max() > 2:
            raise MeshError("An edge is shared by more than two triangles")
        self.edges = _readonly(edges)
        self.edge_of_triangle = _readonly(inverse.reshape(-1, 3))
        self.edge_sign = _readonly(np.where(local[..., 0] < local[..., 1], 1, -1))
        self.boundary_edge = _readonly(counts == 1)

        flat_edge = self.edge_of_triangle.ravel()
        order = np.argsort(flat_edge, kind="stable")
        sorted_edges = flat_edge[order]
        first = np.ones(len(order), dtype=bool)
        first[1:] = sorted_edges[1:] != sorted_edges[:-1]
        owner = order // 3
        position = order % 3
        edge_triangles = np.full((len(edges), 2), -1, dtype=np.int64)
        edge_local = np.full((len(edges), 2), -1, dtype=np.int64)
        for side, mask in ((0, first), (1, ~first)):
            edge_triangles[sorted_edges[mask], side] = owner[mask]
            edge_local[sorted_edges[mask], side] = position[mask]
        self.edge_triangles = _readonly(edge_triangles)
        self.edge_local = _readonly(edge_local)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def vertex(self, index: int) -> Point2:
        x, y = self.vertices[index]
        return Point2(float(x), float(y))

    @cached_property
    def element_vertices(self) -> np.ndarray:
        return _readonly(self.vertices[self.triangles])

    @cached_property
    def origins(self) -> np.ndarray:
        return _readonly(self.element_vertices[:, 0, :].copy())

    @cached_property
    def jacobians(self) -> np.ndarray:
        """J = [v1 - v0, v2 - v0] per triangle, shape (nT, 2, 2)."""
        v = self.element_vertices
        return _readonly(np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]], axis=2))

    @cached_property
    def determinants(self) -> np.ndarray:
        j = self.jacobians
        return _readonly(j[:, 0, 0] * j[:, 1, 1] - j[:, 0, 1] * j[:, 1, 0])

    @cached_property
    def inverse_jacobians(self) -> np.ndarray:
        return _readonly(np.linalg.inv(self.jacobians))

    @cached_property
    def areas(self) -> np.ndarray:
        v = self.vertices[self.triangles]
        d1 = v[:, 1] - v[:, 0]
        d2 = v[:, 2] - v[:, 0]
        return _readonly(0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]))

    @cached_property
    def local_edge_lengths(self) -> np.ndarray:
        v = self.vertices[self.triangles]
        lengths = np.stack(
            [np.linalg.norm(v[:, (i + 2) % 3] - v[:, (i + 1) % 3], axis=1) for i in range(3)],
            axis=1,
        )
        return _readonly(lengths)

    @cached_property
    def diameters(self) -> np.ndarray:
        return _readonly(self.local_edge_lengths.max(axis=1))

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return _readonly(np.linalg.norm(d, axis=1))

    @cached_property
    def edge_normals(self) -> np.ndarray:
        """Unit normals of the globally oriented edges (tangent rotated by -90 degrees)."""
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        normals = np.column_stack([d[:, 1], -d[:, 0]])
        return _readonly(normals / self.edge_lengths[:, None])

    @cached_property
    def boundary_vertex(self) -> np.ndarray:
        flags = np.zeros(self.n_vertices, dtype=bool)
        flags[self.edges[self.boundary_edge].ravel()] = True
        return _readonly(flags)

    def map_points(self, xy: np.ndarray) -> np.ndarray:
        """Map reference points (npts, 2) to every triangle, shape (nT, npts, 2)."""
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        return self.origins[:, None, :] + np.einsum("kij,pj->kpi", self.jacobians, xy)

    def min_angles(self) -> np.ndarray:
        """Smallest interior angle of every triangle, in radians."""
        v = self.vertices[self.triangles]
        angles = []
        for i in range(3):
            a = v[:, (i + 1) % 3] - v[:, i]
            b = v[:, (i + 2) % 3] - v[:, i]
            cos = np.einsum("ij,ij->i", a, b) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
            angles.append(np.arccos(np.clip(cos, -1.0, 1.0)))
        return np.min(np.stack(angles, axis=1), axis=1)

    def is_conforming(self, chunk: int = 256) -> bool:
        """True when no vertex lies in the interior of an edge."""
        start = self.vertices[self.edges[:, 0]]
        direction = self.vertices[self.edges[:, 1]] - start
        length2 = np.einsum("ij,ij->i", direction, direction)
        for lo in range(0, self.n_edges, chunk):
            hi = min(lo + chunk, self.n_edges)
            rel = self.vertices[None, :, :] - start[lo:hi, None, :]
            t = np.einsum("evj,ej->ev", rel, direction[lo:hi]) / length2[lo:hi, None]
            cross = rel[..., 0] * direction[lo:hi, None, 1] - rel[..., 1] * direction[lo:hi, None, 0]
            distance = np.abs(cross) / np.sqrt(length2[lo:hi, None])
            scale = np.sqrt(length2[lo:hi, None])
            inside = (t > GEOMETRY_TOL) & (t < 1.0 - GEOMETRY_TOL) & (distance < GEOMETRY_TOL * scale)
            if inside.any():
                return False
        return True

    def __repr__(self) -> str:
        return (
            f"Mesh(n_vertices={self.n_vertices}, n_triangles={self.n_triangles}, "
            f"n_edges={self.n_edges})"
        )


def longest_edges(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Local index of the longest edge, ties broken by lowest opposite vertex."""
    v = np.asarray(vertices)[np.asarray(triangles)]
    lengths = np.stack(
        [np.linalg.norm(v[:, (i + 2) % 3] - v[:, (i + 1) % 3], axis=1) for i in range(3)],
        axis=1,
    )
    longest = lengths.max(axis=1, keepdims=True)
    candidate = lengths >= longest * (1.0 - 1e-12)
    opposite = np.where(candidate, np.asarray(triangles), np.iinfo(np.int64).max)
    return np.argmin(opposite, axis=1)


def _row_major(cell: tuple[int, int]) -> tuple[int, int]:
    return cell[1], cell[0]


def _structured_squares(n: int, blocks: Iterable[tuple[int, int]]) -> Mesh:
    """Triangulate unit blocks (given by lower-left corners) with n x n squares each.

    Every square is split by its bottom-left to top-right diagonal; vertices
    and squares are numbered row by row.
    """
    if n < 1:
        raise MeshError(f"Mesh resolution must be positive, got {n}")
    cells = sorted(
        {(bx * n + i, by * n + j) for bx, by in blocks for i in range(n) for j in range(n)},
        key=_row_major,
    )
    corners = sorted(
        {(i + di, j + dj) for i, j in cells for di in (0, 1) for dj in (0, 1)},
        key=_row_major,
    )
    index = {corner: number for number, corner in enumerate(corners)}
    triangles = []
    for i, j in cells:
        v00, v10 = index[(i, j)], index[(i + 1, j)]
        v01, v11 = index[(i, j + 1)], index[(i + 1, j + 1)]
        triangles.append((v00, v10, v11))
        triangles.append((v00, v11, v01))
    return Mesh(np.array(corners, dtype=float) / n, np.array(triangles))


def make_unit_square(n: int) -> Mesh:
    """Structured mesh of (0, 1)^2 with 2 n^2 triangles."""
    return _structured_squares(n, [(0, 0)])


def make_lshape(n: int) -> Mesh:
    """Structured mesh of (-1, 1)^2 minus [0, 1] x [-1, 0] with 6 n^2 triangles."""
    return _structured_squares(n, [(-1, -1), (-1, 0), (0, 0)])


def refine_uniform(mesh: Mesh) -> Mesh:
    """Red refinement: every triangle is split into 4 similar children."""
    n_vertices = mesh.n_vertices
    midpoints = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
    vertices = np.vstack([mesh.vertices, midpoints])
    a, b, c = mesh.triangles.T
    m0, m1, m2 = (n_vertices + mesh.edge_of_triangle).T
    children = np.stack(
        [
            np.column_stack([a, m2, m1]),
            np.column_stack([m2, b, m0]),
            np.column_stack([m1, m0, c]),
            np.column_stack([m0, m1, m2]),
        ],
        axis=1,
    ).reshape(-1, 3)
    level = np.repeat(mesh.level + 1, 4)
    refined = Mesh(vertices, children, level=level)
    logger.debug("Red refinement: %d -> %d triangles", mesh.n_triangles, refined.n_triangles)
    return refined


def _closure(mesh: Mesh, marked: np.ndarray) -> np.ndarray:
    """Edges to bisect so that the refined mesh stays conforming."""
    rows = np.arange(mesh.n_triangles)
    ref_edge = mesh.edge_of_triangle[rows, mesh.refinement_edge]
    edge_marked = np.zeros(mesh.n_edges, dtype=bool)
    edge_marked[ref_edge[marked]] = True
    while True:
        touched = edge_marked[mesh.edge_of_triangle].any(axis=1)
        missing = touched & ~edge_marked[ref_edge]
        if not missing.any():
            return edge_marked
        edge_marked[ref_edge[missing]] = True


def refine_adaptive(mesh: Mesh, marked) -> Mesh:
    """Newest-vertex bisection of the marked triangles plus closure.

    Args:
        mesh: Mesh to refine.
        marked: Iterable of triangle indices.

    Returns:
        A new conforming mesh; the input mesh is returned unchanged when
        nothing is marked.

    Raises:
        MeshError: If a marked index does not name a triangle.
    """
    marked = np.unique(np.fromiter((int(t) for t in marked), dtype=np.int64))
    if marked.size == 0:
        return mesh
    if marked[0] < 0 or marked[-1] >= mesh.n_triangles:
        raise MeshError(f"Marked triangle index outside 0..{mesh.n_triangles - 1}")

    edge_marked = _closure(mesh, marked)
    bisected = np.flatnonzero(edge_marked)
    midpoint = np.full(mesh.n_edges, -1, dtype=np.int64)
    midpoint[bisected] = mesh.n_vertices + np.arange(len(bisected))
    new_vertices = 0.5 * (
        mesh.vertices[mesh.edges[bisected, 0]] + mesh.vertices[mesh.edges[bisected, 1]]
    )
    lookup = {
        (int(mesh.edges[e, 0]), int(mesh.edges[e, 1])): int(midpoint[e]) for e in bisected
    }

    def mid(a: int, b: int) -> int:
        return lookup.get((a, b) if a < b else (b, a), -1)

    def bisect(peak: int, b: int, c: int, level: int, out: list) -> None:
        # (peak, b, c) with refinement edge (b, c)
        m = mid(b, c)
        if m < 0:
            out.append((peak, b, c, level))
            return
        bisect(m, peak, b, level + 1, out)
        bisect(m, c, peak, level + 1, out)

    triangles: list[tuple[int, int, int]] = []
    levels: list[int] = []
    refinement_edge: list[int] = []
    for t in range(mesh.n_triangles):
        r = int(mesh.refinement_edge[t])
        tri = mesh.triangles[t]
        if not edge_marked[mesh.edge_of_triangle[t, r]]:
            triangles.append(tuple(int(v) for v in tri))
            levels.append(int(mesh.level[t]))
            refinement_edge.append(r)
            continue
        children: list = []
        bisect(int(tri[r]), int(tri[(r + 1) % 3]), int(tri[(r + 2) % 3]), int(mesh.level[t]), children)
        for peak, b, c, level in children:
            triangles.append((peak, b, c))
            levels.append(level)
            refinement_edge.append(0)

    refined = Mesh(
        np.vstack([mesh.vertices, new_vertices]),
        np.array(triangles),
        level=levels,
        refinement_edge=refinement_edge,
    )
    logger.debug(
        "Bisection: %d marked, %d edges split, %d -> %d triangles",
        len(marked), len(bisected), mesh.n_triangles, refined.n_triangles,
    )
    return refined


def save_mesh(mesh: Mesh, path: Path | str) -> None:
    """Write `v x y` and `t i j k` lines (0-based indices)."""
    lines = [f"v {x:.17g} {y:.17g}" for x, y in mesh.vertices]
    lines += [f"t {i} {j} {k}" for i, j, k in mesh.triangles]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_mesh(path: Path | str) -> Mesh:
    """Read a mesh written by save_mesh.

    Raises:
        MeshError: If the file cannot be parsed.
    """
    vertices, triangles = [], []
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise MeshError(f"Cannot read mesh file {path}: {e}") from e
    for number, line in enumerate(text.splitlines(), start=1):
        fields = line.split()
        if not fields or fields[0].startswith("#"):
            continue
        try:
            if fields[0] == "v" and len(fields) == 3:
                vertices.append((float(fields[1]), float(fields[2])))
            elif fields[0] == "t" and len(fields) == 4:
                triangles.append(tuple(int(f) for f in fields[1:]))
            else:
                raise ValueError(line)
        except ValueError as e:
            raise MeshError(f"{path}:{number}: malformed line {line!r}") from e
    return Mesh(np.array(vertices), np.array(triangles))
