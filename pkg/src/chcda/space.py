"""Quadratic Lagrange space on the structured mesh.

Provides the P2 reference element (values, gradients, constant per-triangle
Hessians), quadrature rules for triangles and edges, the global degree of
freedom map (vertices then edge midpoints), nodal interpolation, and point
evaluation of finite element fields.  Everything downstream assembles from
the tables precomputed here.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss


# ---------------------------------------------------------------------------
# quadrature

@dataclass(frozen=True)
class QuadratureRule:
    """Quadrature rule on a reference domain.

    points has shape (nq, dim); weights sum to the reference measure
    (1/2 for the unit triangle, 1 for the unit interval).  degree is the
    highest polynomial degree integrated exactly.
    """

    points: np.ndarray
    weights: np.ndarray
    degree: int


def _gauss01(m: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = leggauss(m)
    return 0.5 * (x + 1.0), 0.5 * w


def triangle_rule(degree: int) -> QuadratureRule:
    """Rule on the reference triangle {x, y >= 0, x + y <= 1}.

    Built as a collapsed Gauss-Legendre product: exactness for total degree
    d needs m = ceil((d + 2) / 2) points per direction, and the nodes come
    from leggauss so the 1e-13 exactness checks hold at machine precision.
    """
    m = (degree + 3) // 2
    u, wu = _gauss01(m)
    v, wv = _gauss01(m)
    pts = []
    wts = []
    for i in range(m):
        for j in range(m):
            pts.append((u[i], v[j] * (1.0 - u[i])))
            wts.append(wu[i] * wv[j] * (1.0 - u[i]))
    return QuadratureRule(
        points=np.array(pts), weights=np.array(wts), degree=2 * m - 2
    )


def edge_rule(npoints: int = 3) -> QuadratureRule:
    """Gauss rule on the unit interval, exact to degree 2*npoints - 1."""
    x, w = _gauss01(npoints)
    return QuadratureRule(points=x, weights=w, degree=2 * npoints - 1)


# ---------------------------------------------------------------------------
# P2 reference element on the triangle (0,0), (1,0), (0,1)

def p2_basis(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Values and gradients of the six P2 shape functions.

    Local ordering: three corners, then the midpoints opposite each corner
    (edge 1-2, edge 2-0, edge 0-1).

    Parameters
    ----------
    points : (nq, 2) array of reference coordinates.

    Returns
    -------
    (vals, grads) with shapes (nq, 6) and (nq, 6, 2).
    """
    points = np.atleast_2d(points)
    x = points[:, 0]
    y = points[:, 1]
    lam0 = 1.0 - x - y
    vals = np.stack(
        [
            lam0 * (2.0 * lam0 - 1.0),
            x * (2.0 * x - 1.0),
            y * (2.0 * y - 1.0),
            4.0 * x * y,
            4.0 * y * lam0,
            4.0 * x * lam0,
        ],
        axis=1,
    )
    zeros = np.zeros_like(x)
    g0 = 4.0 * x + 4.0 * y - 3.0
    grads = np.stack(
        [
            np.stack([g0, g0], axis=1),
            np.stack([4.0 * x - 1.0, zeros], axis=1),
            np.stack([zeros, 4.0 * y - 1.0], axis=1),
            np.stack([4.0 * y, 4.0 * x], axis=1),
            np.stack([-4.0 * y, 4.0 - 4.0 * x - 8.0 * y], axis=1),
            np.stack([4.0 - 8.0 * x - 4.0 * y, -4.0 * x], axis=1),
        ],
        axis=1,
    )
    return vals, grads


# constant reference Hessians, one 2x2 block per shape function
P2_REF_HESSIANS = np.array(
    [
        [[4.0, 4.0], [4.0, 4.0]],
        [[4.0, 0.0], [0.0, 0.0]],
        [[0.0, 0.0], [0.0, 4.0]],
        [[0.0, 4.0], [4.0, 0.0]],
        [[0.0, -4.0], [-4.0, -8.0]],
        [[-8.0, -4.0], [-4.0, 0.0]],
    ]
)


# ---------------------------------------------------------------------------
# global space

@dataclass(frozen=True)
class EdgeTraces:
    """Per-edge trace tables at the edge quadrature points.

    Slots 0..5 are the first adjacent triangle's shape functions, slots
    6..11 the second's (zero-padded on boundary edges).  jump rows carry the
    signed normal-derivative traces whose slot sum is the jump of the
    assembled function; avg rows carry the second-normal-derivative traces
    whose slot sum is the average.  dofs maps slots to global indices.
    """

    points: np.ndarray   # (E, nq, 2) physical quadrature points
    weights: np.ndarray  # (nq,) reference weights on [0, 1]
    jump: np.ndarray     # (E, nq, 12)
    avg: np.ndarray      # (E, nq, 12)
    dofs: np.ndarray     # (E, 12)


@dataclass(frozen=True)
class Space:
    """P2 Lagrange space with precomputed assembly tables."""

    mesh: "object"
    tri_dofs: np.ndarray      # (T, 6) global dof per local shape function
    node_xy: np.ndarray       # (N, 2) coordinates of all dofs
    volume_rule: QuadratureRule
    edge_quad: QuadratureRule
    basis_vals: np.ndarray    # (nq, 6) at volume points
    phys_grads: np.ndarray    # (T, nq, 6, 2)
    phys_hess: np.ndarray     # (T, 6, 2, 2)
    detB: np.ndarray          # (T,) absolute Jacobian determinants
    Binv: np.ndarray          # (T, 2, 2)
    qp_phys: np.ndarray       # (T, nq, 2) physical volume points
    edge_traces: EdgeTraces = field(repr=False, default=None)

    @property
    def num_dofs(self) -> int:
        return self.node_xy.shape[0]

    @property
    def num_triangles(self) -> int:
        return self.tri_dofs.shape[0]


def build_space(mesh, volume_degree: int = 6, edge_points: int = 3) -> Space:
    """Assemble the P2 space and its quadrature/trace tables for a mesh."""
    vrule = triangle_rule(volume_degree)
    erule = edge_rule(edge_points)

    nV = mesh.num_vertices
    nE = mesh.num_edges
    T = mesh.num_triangles

    # map (sorted vertex pair) -> edge index for midpoint dofs
    pair_to_edge = {
        (int(a), int(b)): e for e, (a, b) in enumerate(mesh.edges)
    }

    tri_dofs = np.empty((T, 6), dtype=np.int64)
    for t in range(T):
        a, b, c = (int(v) for v in mesh.triangles[t])
        tri_dofs[t, 0:3] = (a, b, c)
        for local, (u, v) in enumerate(((b, c), (c, a), (a, b))):
            key = (u, v) if u < v else (v, u)
            tri_dofs[t, 3 + local] = nV + pair_to_edge[key]

    node_xy = np.empty((nV + nE, 2))
    node_xy[:nV] = mesh.vertices
    node_xy[nV:] = 0.5 * (
        mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]]
    )

    p = mesh.vertices[mesh.triangles]          # (T, 3, 2)
    B = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)  # columns
    detB = B[:, 0, 0] * B[:, 1, 1] - B[:, 0, 1] * B[:, 1, 0]
    Binv = np.empty_like(B)
    Binv[:, 0, 0] = B[:, 1, 1] / detB
    Binv[:, 0, 1] = -B[:, 0, 1] / detB
    Binv[:, 1, 0] = -B[:, 1, 0] / detB
    Binv[:, 1, 1] = B[:, 0, 0] / detB
    detB = np.abs(detB)

    vals, grads = p2_basis(vrule.points)
    # physical gradient: grad_x N = B^{-T} grad_ref N
    phys_grads = np.einsum("qib,tba->tqia", grads, Binv)
    # physical Hessian: B^{-T} H_ref B^{-1}
    phys_hess = np.einsum("tba,ibc,tcd->tiad", Binv, P2_REF_HESSIANS, Binv)
    qp_phys = p[:, None, 0, :] + np.einsum("qb,tab->tqa", vrule.points, B)

    space = Space(
        mesh=mesh,
        tri_dofs=tri_dofs,
        node_xy=node_xy,
        volume_rule=vrule,
        edge_quad=erule,
        basis_vals=vals,
        phys_grads=phys_grads,
        phys_hess=phys_hess,
        detB=detB,
        Binv=Binv,
        qp_phys=qp_phys,
        edge_traces=None,
    )
    traces = _build_edge_traces(mesh, space, erule)
    object.__setattr__(space, "edge_traces", traces)
    return space


def _build_edge_traces(mesh, space: Space, erule: QuadratureRule) -> EdgeTraces:
    E = mesh.num_edges
    nq = erule.points.shape[0]
    points = np.empty((E, nq, 2))
    jump = np.zeros((E, nq, 12))
    avg = np.zeros((E, nq, 12))
    dofs = np.zeros((E, 12), dtype=np.int64)

    p0 = mesh.vertices[mesh.edges[:, 0]]
    p1 = mesh.vertices[mesh.edges[:, 1]]
    for e in range(E):
        pts = p0[e] + erule.points[:, None] * (p1[e] - p0[e])
        points[e] = pts
        ne = mesh.edge_normal[e]
        kminus, kplus = mesh.edge_tris[e]
        sides = [(int(kminus), 0)] if kplus < 0 else [
            (int(kminus), 0), (int(kplus), 6)
        ]
        interior = kplus >= 0
        for t, offset in sides:
            origin = mesh.vertices[mesh.triangles[t, 0]]
            ref = (pts - origin) @ space.Binv[t].T  # inverse affine map
            _, g = p2_basis(ref)
            gphys = np.einsum("qib,ba->qia", g, space.Binv[t])
            ndot = np.einsum("qia,a->qi", gphys, ne)
            hnn = np.einsum("a,iab,b->i", ne, space.phys_hess[t], ne)
            if interior:
                sign = -1.0 if offset == 0 else 1.0
                jump[e, :, offset:offset + 6] = sign * ndot
                avg[e, :, offset:offset + 6] = 0.5 * hnn[None, :]
            else:
                jump[e, :, offset:offset + 6] = -ndot
                avg[e, :, offset:offset + 6] = hnn[None, :]
            dofs[e, offset:offset + 6] = space.tri_dofs[t]
    return EdgeTraces(
        points=points, weights=erule.weights, jump=jump, avg=avg, dofs=dofs
    )


# ---------------------------------------------------------------------------
# fields

@dataclass
class Field:
    """Finite element function: coefficient vector tied to its space."""

    space: Space
    values: np.ndarray

    def copy(self) -> "Field":
        return Field(self.space, self.values.copy())


def interpolate_nodal(space: Space, f) -> Field:
    """Nodal interpolant: evaluate f at every vertex and edge midpoint.

    f maps (x, y) arrays to values; constants and any quadratic are
    reproduced exactly.
    """
    vals = np.asarray(f(space.node_xy[:, 0], space.node_xy[:, 1]), dtype=float)
    if vals.shape != (space.num_dofs,):
        vals = np.broadcast_to(vals, (space.num_dofs,)).astype(float).copy()
    return Field(space, vals)


def evaluate_field(field: Field, points: np.ndarray) -> np.ndarray:
    """Evaluate a field at arbitrary points inside the closed unit square.

    Uses the structured inverse map for point location; raises ValueError
    for points outside the domain.
    """
    from .mesh import locate_point

    space = field.space
    points = np.atleast_2d(points)
    out = np.empty(points.shape[0])
    for k, (x, y) in enumerate(points):
        t = locate_point(space.mesh, float(x), float(y))
        origin = space.mesh.vertices[space.mesh.triangles[t, 0]]
        ref = (np.array([x, y]) - origin) @ space.Binv[t].T
        vals, _ = p2_basis(ref[None, :])
        out[k] = vals[0] @ field.values[space.tri_dofs[t]]
    return out


def field_values_at_volume_points(space: Space, coeffs: np.ndarray) -> np.ndarray:
    """Values of a coefficient vector at all volume quadrature points, (T, nq)."""
    local = coeffs[space.tri_dofs]              # (T, 6)
    return np.einsum("ti,qi->tq", local, space.basis_vals)


def field_grads_at_volume_points(space: Space, coeffs: np.ndarray) -> np.ndarray:
    """Gradients at all volume quadrature points, (T, nq, 2)."""
    local = coeffs[space.tri_dofs]
    return np.einsum("ti,tqia->tqa", local, space.phys_grads)
