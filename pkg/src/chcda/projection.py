"""Projection of smooth targets into the P2 space.

The projection is defined by matching the interior penalty form against the
target over the whole space, with the mean pinned to the target's mean to
fix the form's constant kernel.  The resulting saddle system

    [ A  m ] [x]   [b]
    [ m' 0 ] [l] = [mean]

is solved by a sparse direct factorization; the same bordered structure
backs the deflated eigenvalue iterations in the diagnostics module.  Smooth
targets supply values, gradients and Hessians; a finite difference adapter
covers targets without analytic derivatives.  Initial data for experiments
is produced here as well: a smoothed cross-shaped phase layout projected
into the space, or white-noise coefficients that bypass the projection.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .forms import FormSet
from .space import Field, Space


# ---------------------------------------------------------------------------
# smooth targets

@dataclass
class SmoothTarget:
    """Scalar function with vectorized value, gradient and Hessian callables.

    value(xs, ys) -> (m,), grad(xs, ys) -> (m, 2), hess(xs, ys) -> (m, 2, 2).
    """

    value: Callable[[np.ndarray, np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray, np.ndarray], np.ndarray]
    hess: Callable[[np.ndarray, np.ndarray], np.ndarray]


def fd_target(f, step: float = 1e-5) -> SmoothTarget:
    """Wrap a plain value function with central difference derivatives."""

    def grad(xs, ys):
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        gx = (f(xs + step, ys) - f(xs - step, ys)) / (2.0 * step)
        gy = (f(xs, ys + step) - f(xs, ys - step)) / (2.0 * step)
        return np.stack([gx, gy], axis=-1)

    def hess(xs, ys):
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        f0 = f(xs, ys)
        fxx = (f(xs + step, ys) - 2.0 * f0 + f(xs - step, ys)) / step**2
        fyy = (f(xs, ys + step) - 2.0 * f0 + f(xs, ys - step)) / step**2
        fxy = (
            f(xs + step, ys + step)
            - f(xs + step, ys - step)
            - f(xs - step, ys + step)
            + f(xs - step, ys - step)
        ) / (4.0 * step**2)
        h = np.empty(np.shape(f0) + (2, 2))
        h[..., 0, 0] = fxx
        h[..., 0, 1] = fxy
        h[..., 1, 0] = fxy
        h[..., 1, 1] = fyy
        return h

    def value(xs, ys):
        return np.asarray(f(np.asarray(xs, float), np.asarray(ys, float)), float)

    return SmoothTarget(value=value, grad=grad, hess=hess)


def cosine_product_target() -> SmoothTarget:
    """cos(pi x) cos(pi y): smooth, zero normal derivative on the boundary."""
    pi = np.pi

    def value(xs, ys):
        return np.cos(pi * xs) * np.cos(pi * ys)

    def grad(xs, ys):
        gx = -pi * np.sin(pi * xs) * np.cos(pi * ys)
        gy = -pi * np.cos(pi * xs) * np.sin(pi * ys)
        return np.stack([gx, gy], axis=-1)

    def hess(xs, ys):
        cxy = np.cos(pi * xs) * np.cos(pi * ys)
        sxy = np.sin(pi * xs) * np.sin(pi * ys)
        h = np.empty(np.shape(cxy) + (2, 2))
        h[..., 0, 0] = -pi * pi * cxy
        h[..., 1, 1] = -pi * pi * cxy
        h[..., 0, 1] = pi * pi * sxy
        h[..., 1, 0] = pi * pi * sxy
        return h

    return SmoothTarget(value=value, grad=grad, hess=hess)


def _rect_signed_distance(xs, ys, a, b, c, d):
    # positive inside the rectangle [a, b] x [c, d]
    qx = np.maximum(a - xs, xs - b)
    qy = np.maximum(c - ys, ys - d)
    outside = np.hypot(np.maximum(qx, 0.0), np.maximum(qy, 0.0))
    inside = np.minimum(np.maximum(qx, qy), 0.0)
    return -(outside + inside)


def cross_phase_target(eps: float) -> SmoothTarget:
    """Smoothed cross-shaped phase layout.

    tanh profile of width sqrt(2) * eps around the boundary of the union of
    [0.35, 0.65] x [0.2, 0.8] and [0.2, 0.8] x [0.35, 0.65]; +1 inside the
    cross, -1 outside.  Derivatives come from central differences since the
    signed distance is only piecewise smooth.
    """

    def value(xs, ys):
        d1 = _rect_signed_distance(xs, ys, 0.35, 0.65, 0.2, 0.8)
        d2 = _rect_signed_distance(xs, ys, 0.2, 0.8, 0.35, 0.65)
        return np.tanh(np.maximum(d1, d2) / (np.sqrt(2.0) * eps))

    return fd_target(value, step=1e-4)


# ---------------------------------------------------------------------------
# mean-constrained solves

class MeanConstrainedSolver:
    """Direct solver for [A m; m' 0] systems with a cached factorization."""

    def __init__(self, A: sp.spmatrix, mvec: np.ndarray):
        n = A.shape[0]
        col = sp.csc_matrix(mvec.reshape(-1, 1))
        bordered = sp.bmat([[A, col], [col.T, None]], format="csc")
        self._lu = splu(bordered)
        self._n = n

    def solve(self, rhs: np.ndarray, mean: float = 0.0) -> tuple[np.ndarray, float]:
        full = np.concatenate([rhs, [mean]])
        sol = self._lu.solve(full)
        return sol[: self._n], float(sol[self._n])


def assemble_target_load(space: Space, target: SmoothTarget, sigma: float) -> np.ndarray:
    """Load vector with entries a_IP(target, psi_i).

    Volume part pairs the target's Hessian with each basis Hessian; edge
    parts pair the target's (single-valued) second normal derivative with
    basis jumps, and on boundary edges additionally the target's one-sided
    jump -n . grad(target) with basis averages and penalty-weighted jumps.
    """
    qp = space.qp_phys
    w = space.volume_rule.weights
    th = target.hess(qp[..., 0].ravel(), qp[..., 1].ravel())
    th = th.reshape(qp.shape[0], qp.shape[1], 2, 2)
    local = np.einsum("t,q,tqab,tiab->ti", space.detB, w, th, space.phys_hess)
    b = np.zeros(space.num_dofs)
    np.add.at(b, space.tri_dofs, local)

    tr = space.edge_traces
    mesh = space.mesh
    ew = tr.weights
    epts = tr.points
    normals = mesh.edge_normal
    th_e = target.hess(epts[..., 0].ravel(), epts[..., 1].ravel())
    th_e = th_e.reshape(epts.shape[0], epts.shape[1], 2, 2)
    tgt_avg = np.einsum("ea,eqab,eb->eq", normals, th_e, normals)

    tgt_jump = np.zeros(epts.shape[:2])
    bnd = mesh.boundary_edges
    tg = target.grad(epts[bnd, :, 0].ravel(), epts[bnd, :, 1].ravel())
    tg = tg.reshape(len(bnd), epts.shape[1], 2)
    tgt_jump[bnd] = -np.einsum("eqa,ea->eq", tg, normals[bnd])

    elen = mesh.edge_length
    edge_local = np.einsum("e,q,eq,eqa->ea", elen, ew, tgt_avg, tr.jump)
    edge_local += np.einsum("e,q,eq,eqa->ea", elen, ew, tgt_jump, tr.avg)
    edge_local += sigma * np.einsum("q,eq,eqa->ea", ew, tgt_jump, tr.jump)
    np.add.at(b, tr.dofs, edge_local)
    return b


def target_mean(space: Space, target: SmoothTarget) -> float:
    qp = space.qp_phys
    w = space.volume_rule.weights
    vals = target.value(qp[..., 0].ravel(), qp[..., 1].ravel())
    vals = vals.reshape(qp.shape[0], qp.shape[1])
    return float(np.einsum("t,q,tq->", space.detB, w, vals))


def ritz_project(
    space: Space,
    target: SmoothTarget,
    sigma: float,
    fs: FormSet | None = None,
) -> tuple[Field, float]:
    """Project a smooth target into the space through the penalty form.

    Returns the projected field and the Lagrange multiplier of the mean
    constraint (zero up to consistency error for compatible targets).
    """
    fs = fs or FormSet(space)
    A = fs.cip(sigma).matrix
    mvec = fs.mass.matrix @ np.ones(space.num_dofs)
    b = assemble_target_load(space, target, sigma)
    solver = MeanConstrainedSolver(A, mvec)
    x, lam = solver.solve(b, mean=target_mean(space, target))
    return Field(space, x), lam


# ---------------------------------------------------------------------------
# initial data

def random_coefficients(space: Space, seed: int) -> Field:
    """White-noise coefficients, i.i.d. uniform on [-1, 1]; no projection."""
    rng = np.random.default_rng(seed)
    return Field(space, rng.uniform(-1.0, 1.0, space.num_dofs))


def project_initial_data(
    space: Space,
    kind: str,
    sigma: float,
    eps: float = 0.05,
    seed: int = 0,
    fs: FormSet | None = None,
    coeffs: np.ndarray | None = None,
) -> Field:
    """Initial state for a run.

    kind 'cross' projects the smoothed cross layout, 'random' draws white
    noise coefficients (bypassing the projection by design), 'file' wraps
    the supplied coefficient vector, 'zero' returns zeros.
    """
    if kind == "cross":
        phi, _ = ritz_project(space, cross_phase_target(eps), sigma, fs=fs)
        return phi
    if kind == "random":
        return random_coefficients(space, seed)
    if kind == "file":
        if coeffs is None:
            raise ValueError("kind 'file' needs a coefficient vector")
        arr = np.asarray(coeffs, dtype=float)
        if arr.shape != (space.num_dofs,):
            raise ValueError(
                "coefficient vector has %s entries, space has %d"
                % (arr.shape, space.num_dofs)
            )
        return Field(space, arr.copy())
    if kind == "zero":
        return Field(space, np.zeros(space.num_dofs))
    raise ValueError("unknown initial data kind %r" % (kind,))
