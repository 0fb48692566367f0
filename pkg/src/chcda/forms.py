"""Bilinear forms and nonlinear residuals for the fourth-order phase model.

Assembles, over the P2 space:

* mass and stiffness matrices,
* the C0 interior penalty form for the biharmonic operator, as the sum of a
  broken Hessian volume term, symmetric consistency terms coupling averaged
  second normal derivatives to normal-derivative jumps, and a penalty term
  sigma/|e| on the jumps (boundary edges use the one-sided convention that
  encodes the natural zero-normal-derivative condition),
* the mesh-dependent norm whose square is the broken Hessian seminorm plus
  the weighted jump penalty over all edges,
* the semi-implicit time step residual (implicit cubic, explicit linear
  part of the chemical potential) and its exact Jacobian.

All assembly is deterministic: triangles and edges are visited in index
order and duplicates are summed by the sparse COO constructor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .space import (
    Space,
    field_grads_at_volume_points,
    field_values_at_volume_points,
)


@dataclass
class AssembledForm:
    """A sparse matrix plus the little metadata the callers rely on."""

    matrix: sp.csr_matrix
    symmetric: bool
    tag: str


def _scatter_triangle_blocks(space: Space, local: np.ndarray) -> sp.csr_matrix:
    """Sum (T, 6, 6) local blocks into a global sparse matrix."""
    n = space.num_dofs
    rows = np.repeat(space.tri_dofs[:, :, None], 6, axis=2)
    cols = np.repeat(space.tri_dofs[:, None, :], 6, axis=1)
    mat = sp.coo_matrix(
        (local.ravel(), (rows.ravel(), cols.ravel())), shape=(n, n)
    ).tocsr()
    mat.eliminate_zeros()
    return mat


def _scatter_edge_blocks(space: Space, local: np.ndarray) -> sp.csr_matrix:
    """Sum (E, 12, 12) local blocks into a global sparse matrix."""
    n = space.num_dofs
    dofs = space.edge_traces.dofs
    rows = np.repeat(dofs[:, :, None], 12, axis=2)
    cols = np.repeat(dofs[:, None, :], 12, axis=1)
    mat = sp.coo_matrix(
        (local.ravel(), (rows.ravel(), cols.ravel())), shape=(n, n)
    ).tocsr()
    mat.eliminate_zeros()
    return mat


def assemble_mass(space: Space) -> AssembledForm:
    """L2 mass matrix; symmetric positive definite, row/column sums tile 1."""
    w = space.volume_rule.weights
    ref_block = np.einsum("q,qi,qj->ij", w, space.basis_vals, space.basis_vals)
    local = space.detB[:, None, None] * ref_block[None, :, :]
    return AssembledForm(_scatter_triangle_blocks(space, local), True, "mass")


def assemble_stiffness(space: Space) -> AssembledForm:
    """H1 stiffness matrix; symmetric positive semidefinite, kernel constants."""
    w = space.volume_rule.weights
    local = np.einsum(
        "t,q,tqia,tqja->tij",
        space.detB,
        w,
        space.phys_grads,
        space.phys_grads,
    )
    return AssembledForm(_scatter_triangle_blocks(space, local), True, "stiffness")


def _cip_volume_part(space: Space) -> sp.csr_matrix:
    # Hessians are constant per triangle, so the Frobenius product times the
    # area integrates the broken Hessian term exactly.
    area = 0.5 * space.detB
    frob = np.einsum("tiab,tjab->tij", space.phys_hess, space.phys_hess)
    return _scatter_triangle_blocks(space, area[:, None, None] * frob)


def _cip_edge_parts(space: Space) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    tr = space.edge_traces
    w = tr.weights
    elen = space.mesh.edge_length
    cons = np.einsum("q,eqa,eqb->eab", w, tr.avg, tr.jump)
    cons = elen[:, None, None] * (cons + cons.transpose(0, 2, 1))
    # sigma/|e| times the edge integral: the lengths cancel, leaving the
    # plain weighted product of jump traces (scaled by sigma later).
    pen = np.einsum("q,eqa,eqb->eab", w, tr.jump, tr.jump)
    return _scatter_edge_blocks(space, cons), _scatter_edge_blocks(space, pen)


class FormSet:
    """Caches every sigma-independent piece of the assembly for one space."""

    def __init__(self, space: Space):
        self.space = space
        self._mass = None
        self._stiffness = None
        self._cip_vol = None
        self._cip_cons = None
        self._cip_pen = None

    @property
    def mass(self) -> AssembledForm:
        if self._mass is None:
            self._mass = assemble_mass(self.space)
        return self._mass

    @property
    def stiffness(self) -> AssembledForm:
        if self._stiffness is None:
            self._stiffness = assemble_stiffness(self.space)
        return self._stiffness

    def _edge_parts(self):
        if self._cip_cons is None:
            self._cip_cons, self._cip_pen = _cip_edge_parts(self.space)
        return self._cip_cons, self._cip_pen

    def cip(self, sigma: float) -> AssembledForm:
        """Interior penalty form with penalty weight sigma (must be >= 1)."""
        if sigma < 1.0:
            raise ValueError("penalty parameter sigma must be at least 1")
        if self._cip_vol is None:
            self._cip_vol = _cip_volume_part(self.space)
        cons, pen = self._edge_parts()
        mat = (self._cip_vol + cons + sigma * pen).tocsr()
        return AssembledForm(mat, True, "cip")

    def norm_gram(self, sigma: float) -> sp.csr_matrix:
        """Gram matrix of the mesh-dependent norm (volume + penalty parts)."""
        if sigma < 1.0:
            raise ValueError("penalty parameter sigma must be at least 1")
        if self._cip_vol is None:
            self._cip_vol = _cip_volume_part(self.space)
        _, pen = self._edge_parts()
        return (self._cip_vol + sigma * pen).tocsr()


def assemble_cip(space: Space, sigma: float) -> AssembledForm:
    return FormSet(space).cip(sigma)


def norm_2h(space: Space, coeffs: np.ndarray, sigma: float,
            gram: sp.csr_matrix | None = None) -> float:
    """Mesh-dependent norm of a coefficient vector."""
    if gram is None:
        gram = FormSet(space).norm_gram(sigma)
    val = float(coeffs @ (gram @ coeffs))
    return float(np.sqrt(max(val, 0.0)))


# ---------------------------------------------------------------------------
# nonlinear terms

def cubic_gradient_vector(space: Space, coeffs: np.ndarray) -> np.ndarray:
    """Vector with entries (grad(phi^3), grad psi_i), by quadrature.

    The integrand 3 phi^2 grad phi . grad psi_i has degree 6 and is
    integrated exactly by the volume rule.
    """
    w = space.volume_rule.weights
    vals = field_values_at_volume_points(space, coeffs)
    grads = field_grads_at_volume_points(space, coeffs)
    local = np.einsum(
        "t,q,tq,tqa,tqia->ti",
        space.detB,
        w,
        3.0 * vals * vals,
        grads,
        space.phys_grads,
    )
    out = np.zeros(space.num_dofs)
    np.add.at(out, space.tri_dofs, local)
    return out


def cubic_linearization(space: Space, coeffs: np.ndarray) -> sp.csr_matrix:
    """Exact derivative of the cubic gradient vector with respect to phi.

    Row i, column j holds the integral of
    3 phi^2 grad psi_j . grad psi_i + 6 phi psi_j grad phi . grad psi_i.
    The second piece makes this the true linearization (and leaves the
    matrix mildly nonsymmetric); at phi constant it reduces to 3 phi^2
    times the stiffness matrix.
    """
    w = space.volume_rule.weights
    vals = field_values_at_volume_points(space, coeffs)
    grads = field_grads_at_volume_points(space, coeffs)
    part1 = np.einsum(
        "t,q,tq,tqja,tqia->tij",
        space.detB,
        w,
        3.0 * vals * vals,
        space.phys_grads,
        space.phys_grads,
    )
    part2 = np.einsum(
        "t,q,tq,qj,tqa,tqia->tij",
        space.detB,
        w,
        6.0 * vals,
        space.basis_vals,
        grads,
        space.phys_grads,
    )
    return _scatter_triangle_blocks(space, part1 + part2)


def assemble_residual(
    fs: FormSet,
    phi: np.ndarray,
    phi_prev: np.ndarray,
    dt: float,
    eps: float,
    sigma: float,
    nudge_matrix: sp.csr_matrix | None = None,
    obs_rhs: np.ndarray | None = None,
) -> np.ndarray:
    """Residual of one semi-implicit step at the candidate state phi.

    The cubic part of the chemical potential is implicit, the linear part
    explicit at phi_prev; nudge_matrix (already scaled by the nudging
    weight) and obs_rhs carry the observation term when present.
    """
    M = fs.mass.matrix
    K = fs.stiffness.matrix
    A = fs.cip(sigma).matrix
    r = M @ ((phi - phi_prev) / dt)
    r += cubic_gradient_vector(fs.space, phi)
    r -= K @ phi_prev
    r += (eps * eps) * (A @ phi)
    if nudge_matrix is not None:
        r += nudge_matrix @ phi
    if obs_rhs is not None:
        r -= obs_rhs
    return r


def assemble_jacobian(
    fs: FormSet,
    phi: np.ndarray,
    dt: float,
    eps: float,
    sigma: float,
    nudge_matrix: sp.csr_matrix | None = None,
) -> sp.csr_matrix:
    """Exact Jacobian of the step residual at phi."""
    M = fs.mass.matrix
    A = fs.cip(sigma).matrix
    J = (M / dt + (eps * eps) * A + cubic_linearization(fs.space, phi)).tocsr()
    if nudge_matrix is not None:
        J = (J + nudge_matrix).tocsr()
    return J
