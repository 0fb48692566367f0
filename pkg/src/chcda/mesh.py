"""Structured triangulations of the unit square.

Builds the conforming mesh of right isosceles triangles used everywhere else:
n x n congruent squares, each split by a diagonal into two triangles.  The
default diagonal runs lower-left to upper-right; the two corner squares whose
default split would hand a triangle two boundary edges get the opposite
diagonal, so no triangle owns more than one boundary edge.  Edge connectivity
carries a fixed unit normal per edge (from the first adjacent triangle into
the second, outward on the boundary) so that interior-penalty jump and
average terms are assembled consistently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Mesh:
    """Conforming triangulation of the closed unit square.

    Attributes
    ----------
    n : int
        Squares per side; the mesh has 2*n*n triangles.
    vertices : (V, 2) float array
        Vertex coordinates.
    triangles : (T, 3) int array
        Vertex indices per triangle, counterclockwise.
    edges : (E, 2) int array
        Sorted vertex index pairs, enumerated lexicographically.
    edge_length : (E,) float array
        Edge lengths.
    edge_tris : (E, 2) int array
        Adjacent triangles (K-, K+); K+ is -1 on boundary edges.
    edge_normal : (E, 2) float array
        Unit normal per edge, pointing from K- into K+ (outward from K- on
        the boundary).  The sign convention is fixed once here; assembled
        jump/average products do not depend on it.
    flipped : (n*n,) bool array
        Squares carrying the anti-diagonal split, in row-major square order.
    h : float
        Maximum triangle diameter, sqrt(2)/n.
    """

    n: int
    vertices: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray
    edge_length: np.ndarray
    edge_tris: np.ndarray
    edge_normal: np.ndarray
    flipped: np.ndarray
    h: float

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def num_edges(self) -> int:
        return self.edges.shape[0]

    @property
    def boundary_edges(self) -> np.ndarray:
        """Indices of edges lying on the boundary of the unit square."""
        return np.flatnonzero(self.edge_tris[:, 1] < 0)

    @property
    def interior_edges(self) -> np.ndarray:
        return np.flatnonzero(self.edge_tris[:, 1] >= 0)

    def triangle_corners(self, t: int) -> np.ndarray:
        """Corner coordinates of triangle t as a (3, 2) array."""
        return self.vertices[self.triangles[t]]

    def triangle_area(self, t: int) -> float:
        p = self.triangle_corners(t)
        return 0.5 * abs(
            (p[1, 0] - p[0, 0]) * (p[2, 1] - p[0, 1])
            - (p[2, 0] - p[0, 0]) * (p[1, 1] - p[0, 1])
        )


def _square_is_flipped(ix: int, iy: int, n: int) -> bool:
    # The default diagonal gives the bottom-right and top-left corner squares
    # a triangle with two boundary edges; those two squares flip.
    return (ix == n - 1 and iy == 0) or (ix == 0 and iy == n - 1)


def build_uniform_mesh(n: int) -> Mesh:
    """Build the structured criss-cross mesh with n squares per side.

    Parameters
    ----------
    n : int
        Number of squares per side; must be at least 2 so the corner rule
        is well defined.

    Returns
    -------
    Mesh
        Validated mesh with edge connectivity and normals precomputed.
    """
    if n < 2:
        raise ValueError("mesh needs n >= 2 squares per side")

    xs = np.linspace(0.0, 1.0, n + 1)
    gx, gy = np.meshgrid(xs, xs, indexing="xy")
    vertices = np.column_stack([gx.ravel(), gy.ravel()])

    def vid(ix: int, iy: int) -> int:
        return iy * (n + 1) + ix

    triangles = np.empty((2 * n * n, 3), dtype=np.int64)
    flipped = np.zeros(n * n, dtype=bool)
    for iy in range(n):
        for ix in range(n):
            s = iy * n + ix
            v00 = vid(ix, iy)
            v10 = vid(ix + 1, iy)
            v01 = vid(ix, iy + 1)
            v11 = vid(ix + 1, iy + 1)
            if _square_is_flipped(ix, iy, n):
                flipped[s] = True
                triangles[2 * s] = (v00, v10, v01)
                triangles[2 * s + 1] = (v10, v11, v01)
            else:
                triangles[2 * s] = (v00, v10, v11)
                triangles[2 * s + 1] = (v00, v11, v01)

    edges, edge_tris = _build_edge_connectivity(triangles)
    p0 = vertices[edges[:, 0]]
    p1 = vertices[edges[:, 1]]
    edge_length = np.linalg.norm(p1 - p0, axis=1)

    edge_normal = _orient_normals(vertices, triangles, edges, edge_tris, edge_length)

    mesh = Mesh(
        n=n,
        vertices=vertices,
        triangles=triangles,
        edges=edges,
        edge_length=edge_length,
        edge_tris=edge_tris,
        edge_normal=edge_normal,
        flipped=flipped,
        h=np.sqrt(2.0) / n,
    )
    validate_mesh(mesh)
    return mesh


def _build_edge_connectivity(triangles: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pair_to_tris: dict[tuple[int, int], list[int]] = {}
    for t in range(triangles.shape[0]):
        a, b, c = triangles[t]
        for u, v in ((a, b), (b, c), (c, a)):
            key = (u, v) if u < v else (v, u)
            pair_to_tris.setdefault(key, []).append(t)

    keys = sorted(pair_to_tris)
    edges = np.array(keys, dtype=np.int64)
    edge_tris = np.full((len(keys), 2), -1, dtype=np.int64)
    for e, key in enumerate(keys):
        tris = sorted(pair_to_tris[key])
        if len(tris) > 2:
            raise ValueError("non-manifold edge %s" % (key,))
        edge_tris[e, 0] = tris[0]
        if len(tris) == 2:
            edge_tris[e, 1] = tris[1]
    return edges, edge_tris


def _orient_normals(
    vertices: np.ndarray,
    triangles: np.ndarray,
    edges: np.ndarray,
    edge_tris: np.ndarray,
    edge_length: np.ndarray,
) -> np.ndarray:
    centroids = vertices[triangles].mean(axis=1)
    p0 = vertices[edges[:, 0]]
    p1 = vertices[edges[:, 1]]
    tang = (p1 - p0) / edge_length[:, None]
    normal = np.column_stack([tang[:, 1], -tang[:, 0]])
    mid = 0.5 * (p0 + p1)
    for e in range(edges.shape[0]):
        kminus, kplus = edge_tris[e]
        if kplus >= 0:
            point_into = centroids[kplus] - centroids[kminus]
        else:
            point_into = mid[e] - centroids[kminus]
        if np.dot(normal[e], point_into) < 0.0:
            normal[e] = -normal[e]
    return normal


def edge_trace_geometry(mesh: Mesh, e: int):
    """Geometry bundle for one edge.

    Returns
    -------
    (endpoints, normal, length, (kminus, kplus))
        endpoints is a (2, 2) array of the edge's vertex coordinates in the
        stored (sorted) order; kplus is -1 for boundary edges.
    """
    endpoints = mesh.vertices[mesh.edges[e]]
    return (
        endpoints,
        mesh.edge_normal[e].copy(),
        float(mesh.edge_length[e]),
        (int(mesh.edge_tris[e, 0]), int(mesh.edge_tris[e, 1])),
    )


def triangle_min_angle(mesh: Mesh) -> float:
    """Smallest interior angle over all triangles, in degrees."""
    p = mesh.vertices[mesh.triangles]
    angles = []
    for i in range(3):
        a = p[:, (i + 1) % 3] - p[:, i]
        b = p[:, (i + 2) % 3] - p[:, i]
        cosang = np.sum(a * b, axis=1) / (
            np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1)
        )
        angles.append(np.degrees(np.arccos(np.clip(cosang, -1.0, 1.0))))
    return float(np.min(angles))


def validate_mesh(mesh: Mesh) -> None:
    """Cheap structural self-checks run at build time."""
    n = mesh.n
    if mesh.num_vertices != (n + 1) ** 2:
        raise AssertionError("vertex count mismatch")
    if mesh.num_triangles != 2 * n * n:
        raise AssertionError("triangle count mismatch")
    if mesh.num_edges != 2 * n * (n + 1) + n * n:
        raise AssertionError("edge count mismatch")

    # counterclockwise orientation, positive areas summing to the unit square
    p = mesh.vertices[mesh.triangles]
    cross = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (
        p[:, 2, 0] - p[:, 0, 0]
    ) * (p[:, 1, 1] - p[:, 0, 1])
    if np.any(cross <= 0.0):
        raise AssertionError("triangle orientation must be counterclockwise")
    if abs(0.5 * cross.sum() - 1.0) > 1e-12:
        raise AssertionError("triangle areas must tile the unit square")

    # stored lengths and normals agree with recomputation from coordinates
    p0 = mesh.vertices[mesh.edges[:, 0]]
    p1 = mesh.vertices[mesh.edges[:, 1]]
    if np.max(np.abs(np.linalg.norm(p1 - p0, axis=1) - mesh.edge_length)) > 1e-14:
        raise AssertionError("stored edge lengths disagree with coordinates")
    norms = np.linalg.norm(mesh.edge_normal, axis=1)
    if np.max(np.abs(norms - 1.0)) > 1e-14:
        raise AssertionError("edge normals must be unit vectors")
    tang = p1 - p0
    if np.max(np.abs(np.sum(tang * mesh.edge_normal, axis=1))) > 1e-12:
        raise AssertionError("edge normals must be orthogonal to edges")

    # no triangle owns more than one boundary edge
    counts = np.zeros(mesh.num_triangles, dtype=np.int64)
    for e in mesh.boundary_edges:
        counts[mesh.edge_tris[e, 0]] += 1
    if counts.max() > 1:
        raise AssertionError("a triangle owns more than one boundary edge")


def locate_point(mesh: Mesh, x: float, y: float) -> int:
    """Triangle index containing (x, y), using the structured inverse map.

    Points on shared edges resolve deterministically (ties go to the first
    triangle of the square).  Raises ValueError outside the closed square.
    """
    eps = 1e-12
    if not (-eps <= x <= 1.0 + eps and -eps <= y <= 1.0 + eps):
        raise ValueError("point (%g, %g) lies outside the unit square" % (x, y))
    n = mesh.n
    ix = min(int(np.floor(min(max(x, 0.0), 1.0) * n)), n - 1)
    iy = min(int(np.floor(min(max(y, 0.0), 1.0) * n)), n - 1)
    fx = x * n - ix
    fy = y * n - iy
    s = iy * n + ix
    if mesh.flipped[s]:
        local = 0 if fx + fy <= 1.0 else 1
    else:
        local = 0 if fx >= fy else 1
    return 2 * s + local
