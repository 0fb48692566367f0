"""P2 space: quadrature, basis, dof map, interpolation, edge traces."""

import numpy as np
import pytest

from chcda.mesh import build_uniform_mesh
from chcda.space import (
    P2_REF_HESSIANS,
    Field,
    build_space,
    edge_rule,
    evaluate_field,
    interpolate_nodal,
    p2_basis,
    triangle_rule,
)

from conftest import get_space

# reference-triangle nodes in the local dof order: vertices then the
# midpoints opposite each vertex
REF_NODES = np.array(
    [[0, 0], [1, 0], [0, 1], [0.5, 0.5], [0, 0.5], [0.5, 0]], dtype=float
)


def _monomial_integral_triangle(p, q):
    # int over reference triangle of x^p y^q = p! q! / (p + q + 2)!
    from math import factorial

    return factorial(p) * factorial(q) / factorial(p + q + 2)


def test_triangle_rule_exactness():
    rule = triangle_rule(6)
    assert abs(rule.weights.sum() - 0.5) < 1e-15
    for p in range(7):
        for q in range(7 - p):
            val = np.sum(
                rule.weights * rule.points[:, 0] ** p * rule.points[:, 1] ** q
            )
            assert abs(val - _monomial_integral_triangle(p, q)) < 1e-13, (p, q)


def test_edge_rule_exactness():
    rule = edge_rule(3)
    assert abs(rule.weights.sum() - 1.0) < 1e-15
    for p in range(6):  # 3-point Gauss is exact to degree 5
        val = np.sum(rule.weights * rule.points ** p)
        assert abs(val - 1.0 / (p + 1)) < 1e-13


def test_basis_kronecker_property():
    vals, _ = p2_basis(REF_NODES)
    np.testing.assert_allclose(vals, np.eye(6), atol=1e-14)


def test_basis_partition_of_unity(rng):
    pts = rng.uniform(0, 1, size=(40, 2))
    pts = pts[pts.sum(axis=1) <= 1.0]
    vals, grads = p2_basis(pts)
    np.testing.assert_allclose(vals.sum(axis=1), 1.0, atol=1e-13)
    np.testing.assert_allclose(grads.sum(axis=1), 0.0, atol=1e-12)


def test_hessians_reproduce_quadratic():
    # global x^2 has Hessian [[2, 0], [0, 0]] on every triangle
    sp = get_space(3)
    coeffs = sp.node_xy[:, 0] ** 2
    for t in (0, 5, sp.mesh.num_triangles - 1):
        H = np.einsum("i,iab->ab", coeffs[sp.tri_dofs[t]], sp.phys_hess[t])
        np.testing.assert_allclose(H, [[2.0, 0.0], [0.0, 0.0]], atol=1e-11)


def test_ref_hessians_constant_table():
    # the reference Hessians of the P2 basis are constant matrices
    assert P2_REF_HESSIANS.shape == (6, 2, 2)
    two = P2_REF_HESSIANS[0]
    np.testing.assert_allclose(two, two.T, atol=0)


@pytest.mark.parametrize("n", [2, 5])
def test_dof_count(n):
    sp = get_space(n)
    assert sp.num_dofs == (2 * n + 1) ** 2
    assert sp.num_dofs == sp.mesh.num_vertices + sp.mesh.num_edges


def test_dof_map_continuity():
    # adjacent triangles refer to shared vertices and the shared edge
    # midpoint by the same global index
    sp = get_space(4)
    m = sp.mesh
    for e in m.interior_edges:
        k0, k1 = m.edge_tris[e]
        shared = set(sp.tri_dofs[k0]) & set(sp.tri_dofs[k1])
        assert len(shared) == 3  # two vertices + one midpoint


def test_node_coordinates_match_dofs():
    sp = get_space(3)
    # vertex dofs carry vertex coordinates
    np.testing.assert_allclose(
        sp.node_xy[: sp.mesh.num_vertices], sp.mesh.vertices, atol=0
    )


def test_interpolate_constant_and_linear(rng):
    sp = get_space(4)
    c = interpolate_nodal(sp, lambda x, y: 0.0 * x + 3.25)
    np.testing.assert_allclose(c.values, 3.25, atol=0)
    f = interpolate_nodal(sp, lambda x, y: 2.0 * x - y + 0.5)
    pts = rng.uniform(0, 1, size=(25, 2))
    exact = 2 * pts[:, 0] - pts[:, 1] + 0.5
    np.testing.assert_allclose(evaluate_field(f, pts), exact, atol=1e-13)


def test_interpolate_quadratic_exact(rng):
    sp = get_space(3)
    f = interpolate_nodal(sp, lambda x, y: x * x - 2 * x * y + 3 * y * y)
    pts = rng.uniform(0, 1, size=(25, 2))
    exact = pts[:, 0] ** 2 - 2 * pts[:, 0] * pts[:, 1] + 3 * pts[:, 1] ** 2
    np.testing.assert_allclose(evaluate_field(f, pts), exact, atol=1e-12)


def test_interpolation_rate_cubic():
    # L2 interpolation error of sin(pi x) decays at third order
    errs = []
    for n in (8, 16, 32, 64):
        sp = get_space(n)
        f = interpolate_nodal(sp, lambda x, y: np.sin(np.pi * x))
        vals = np.einsum("ti,qi->tq", f.values[sp.tri_dofs], sp.basis_vals)
        exact = np.sin(np.pi * sp.qp_phys[..., 0])
        err2 = np.einsum(
            "t,q,tq->", sp.detB, sp.volume_rule.weights, (vals - exact) ** 2
        )
        errs.append(np.sqrt(err2))
    slopes = np.diff(np.log(errs)) / np.log(0.5)
    assert np.all(np.abs(slopes - 3.0) < 0.15), slopes


def test_field_requires_finite_values():
    sp = get_space(2)
    f = interpolate_nodal(sp, lambda x, y: x)
    assert np.all(np.isfinite(f.values))


def _fd_gradient(field, x, y, delta=1e-6):
    pts = np.array(
        [[x + delta, y], [x - delta, y], [x, y + delta], [x, y - delta]]
    )
    v = evaluate_field(field, pts)
    return np.array([v[0] - v[1], v[2] - v[3]]) / (2 * delta)


def test_edge_traces_interior_jump_oracle(rng):
    # recompute the normal-derivative jump of a random field on interior
    # edges by central finite differences of the evaluated field, sampled
    # slightly off each side of the edge
    sp = get_space(4)
    m = sp.mesh
    coeffs = rng.standard_normal(sp.num_dofs)
    tr = sp.edge_traces
    f = Field(space=sp, values=coeffs)
    checked = 0
    for e in m.interior_edges[:12]:
        n = m.edge_normal[e]
        for q in range(tr.points.shape[1]):
            x, y = tr.points[e, q]
            if not (0.02 < x < 0.98 and 0.02 < y < 0.98):
                continue
            jump_tr = float(tr.jump[e, q] @ coeffs[tr.dofs[e]])
            # the gradient of a piecewise quadratic is linear in position,
            # so extrapolating from two offsets removes the off-edge bias
            vals = {}
            for off in (1e-4, 2e-4):
                gp = _fd_gradient(f, x + off * n[0], y + off * n[1], 1e-5)
                gm = _fd_gradient(f, x - off * n[0], y - off * n[1], 1e-5)
                vals[off] = float(n @ (gp - gm))
            jump_fd = 2 * vals[1e-4] - vals[2e-4]
            assert abs(jump_tr - jump_fd) < 1e-5, (e, q)
            checked += 1
    assert checked > 10


def test_edge_traces_boundary_jump_is_minus_normal_derivative(rng):
    sp = get_space(4)
    m = sp.mesh
    coeffs = rng.standard_normal(sp.num_dofs)
    tr = sp.edge_traces
    f = Field(space=sp, values=coeffs)
    for e in m.boundary_edges[:8]:
        n = m.edge_normal[e]
        for q in range(tr.points.shape[1]):
            x, y = tr.points[e, q]
            jump_tr = float(tr.jump[e, q] @ coeffs[tr.dofs[e]])
            vals = {}
            for off in (1e-4, 2e-4):
                gi = _fd_gradient(f, x - off * n[0], y - off * n[1], 1e-5)
                vals[off] = -float(n @ gi)
            jump_fd = 2 * vals[1e-4] - vals[2e-4]
            assert abs(jump_tr - jump_fd) < 1e-5, (e, q)


def test_constant_field_has_no_jumps():
    sp = get_space(3)
    coeffs = np.full(sp.num_dofs, 2.0)
    tr = sp.edge_traces
    jumps = np.einsum("eqi,ei->eq", tr.jump, coeffs[tr.dofs])
    assert np.abs(jumps).max() < 1e-13
