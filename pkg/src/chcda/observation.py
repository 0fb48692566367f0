"""Coarse-grid observation operators for nudging.

The observation operator averages a field over the cells of a uniform
coarse grid of spacing H laid over the unit square.  Cells must align with
the fine mesh: 1/H is a positive integer and H is an integer multiple of
1/n, so every cell is a union of whole mesh squares and all cell integrals
are exact quadrature sums.  The induced nudging matrix couples basis
functions through shared cells and is symmetric positive semidefinite with
rank at most the number of cells.

A masked-node variant is also provided: an indicator coefficient vector
holding 1 at the (1/H)^2 cell-center nodes (cell centers always coincide
with P2 nodes on this mesh family) multiplies the fields inside the L2
pairing instead of averaging them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .forms import AssembledForm
from .space import Space, field_values_at_volume_points, p2_basis, triangle_rule


@dataclass
class CoarseObservationGrid:
    """Aligned coarse cells, their integral functionals, and the cell map.

    cell_integrals rows hold the integral of each basis function over one
    cell; cell (cx, cy) is row cy * cells_per_side + cx, counting from the
    lower-left corner.
    """

    space: Space
    H: float
    cells_per_side: int
    squares_per_cell: int
    cell_area: float
    cell_integrals: sp.csr_matrix
    cell_of_triangle: np.ndarray
    _nudging: sp.csr_matrix | None = field(default=None, repr=False)

    @property
    def num_cells(self) -> int:
        return self.cells_per_side ** 2


def build_observation_grid(space: Space, H: float) -> CoarseObservationGrid:
    """Build the aligned coarse grid of spacing H over a space.

    Raises ValueError unless 1/H is a positive integer and H is an integer
    multiple of the mesh spacing 1/n.
    """
    n = space.mesh.n
    nc = int(round(1.0 / H))
    if nc < 1 or abs(nc * H - 1.0) > 1e-9:
        raise ValueError("1/H must be a positive integer, got H=%r" % (H,))
    k = int(round(H * n))
    if k < 1 or abs(k - H * n) > 1e-9 or nc * k != n:
        raise ValueError(
            "H must be an integer multiple of 1/n (H=%r, n=%d)" % (H, n)
        )

    squares = np.arange(space.num_triangles) // 2
    sx = squares % n
    sy = squares // n
    cell_of_triangle = (sy // k) * nc + (sx // k)

    # integral of each basis function over its triangle, summed per cell
    w = space.volume_rule.weights
    tri_ints = space.detB[:, None] * np.einsum("q,qi->i", w, space.basis_vals)
    rows = np.repeat(cell_of_triangle, 6)
    cols = space.tri_dofs.ravel()
    C = sp.coo_matrix(
        (tri_ints.ravel(), (rows, cols)),
        shape=(nc * nc, space.num_dofs),
    ).tocsr()

    return CoarseObservationGrid(
        space=space,
        H=H,
        cells_per_side=nc,
        squares_per_cell=k,
        cell_area=(k / n) ** 2,
        cell_integrals=C,
        cell_of_triangle=cell_of_triangle,
    )


def project_IH(grid: CoarseObservationGrid, coeffs: np.ndarray) -> np.ndarray:
    """Cell averages of a field, as a (cells_per_side, cells_per_side) array.

    Row index is the cell's y position, column index its x position.
    """
    avg = (grid.cell_integrals @ coeffs) / grid.cell_area
    return avg.reshape(grid.cells_per_side, grid.cells_per_side)


def assemble_nudging(grid: CoarseObservationGrid) -> AssembledForm:
    """Matrix of (I_H psi_j, psi_i); PSD with rank at most the cell count."""
    if grid._nudging is None:
        C = grid.cell_integrals
        grid._nudging = (C.T @ C) / grid.cell_area
    return AssembledForm(grid._nudging.tocsr(), True, "nudging")


def observation_rhs(
    grid: CoarseObservationGrid, truth_coeffs: np.ndarray, omega: float
) -> np.ndarray:
    """Load vector omega * (I_H truth, psi_i)."""
    if omega == 0.0:
        return np.zeros(grid.space.num_dofs)
    return omega * (assemble_nudging(grid).matrix @ truth_coeffs)


def coarse_l2_norm(grid: CoarseObservationGrid, averages: np.ndarray) -> float:
    """L2 norm of the piecewise constant function with the given averages."""
    return float(np.sqrt(grid.cell_area * np.sum(np.asarray(averages) ** 2)))


def l2_distance_to_averages(
    grid: CoarseObservationGrid, coeffs: np.ndarray, averages: np.ndarray
) -> float:
    """L2 norm of (field - piecewise constant averages), by quadrature."""
    space = grid.space
    w = space.volume_rule.weights
    vals = field_values_at_volume_points(space, coeffs)
    cell_vals = np.asarray(averages).ravel()[grid.cell_of_triangle]
    diff2 = (vals - cell_vals[:, None]) ** 2
    total = np.einsum("t,q,tq->", space.detB, w, diff2)
    return float(np.sqrt(max(total, 0.0)))


# ---------------------------------------------------------------------------
# masked-node variant

def indicator_node_vector(grid: CoarseObservationGrid) -> np.ndarray:
    """Coefficient vector holding 1 at every cell-center node, else 0.

    With k squares per cell side, centers land on a vertex when k is even
    and on a diagonal midpoint node when k is odd; both are P2 nodes.
    """
    space = grid.space
    n = space.mesh.n
    lattice = {}
    scaled = np.rint(space.node_xy * (2 * n)).astype(np.int64)
    for dof, (ix, iy) in enumerate(scaled):
        lattice[(int(ix), int(iy))] = dof
    v = np.zeros(space.num_dofs)
    k = grid.squares_per_cell
    for cy in range(grid.cells_per_side):
        for cx in range(grid.cells_per_side):
            key = (2 * cx * k + k, 2 * cy * k + k)
            v[lattice[key]] = 1.0
    return v


def indicator_mass(grid: CoarseObservationGrid) -> sp.csr_matrix:
    """Matrix with entries int v^2 psi_j psi_i, v the cell-center indicator.

    The integrand has degree 8, so a dedicated degree-8 rule is used.
    """
    space = grid.space
    v = indicator_node_vector(grid)
    rule = triangle_rule(8)
    vals, _ = p2_basis(rule.points)
    vloc = v[space.tri_dofs]
    vq = np.einsum("ti,qi->tq", vloc, vals)
    local = np.einsum(
        "t,q,tq,qi,qj->tij",
        space.detB,
        rule.weights,
        vq * vq,
        vals,
        vals,
    )
    n = space.num_dofs
    rows = np.repeat(space.tri_dofs[:, :, None], 6, axis=2)
    cols = np.repeat(space.tri_dofs[:, None, :], 6, axis=1)
    mat = sp.coo_matrix(
        (local.ravel(), (rows.ravel(), cols.ravel())), shape=(n, n)
    ).tocsr()
    mat.eliminate_zeros()
    return mat


def indicator_variant_rhs(
    grid: CoarseObservationGrid,
    truth_coeffs: np.ndarray,
    omega: float,
) -> tuple[sp.csr_matrix, np.ndarray]:
    """Masked-node observation term as (matrix contribution, load vector).

    The residual contribution is matrix @ phi - vector applied to the
    current iterate; both parts are scaled by omega, so omega = 0 yields an
    exactly zero contribution.
    """
    B = indicator_mass(grid)
    if omega == 0.0:
        z = sp.csr_matrix(B.shape)
        return z, np.zeros(grid.space.num_dofs)
    return (omega * B).tocsr(), omega * (B @ truth_coeffs)
