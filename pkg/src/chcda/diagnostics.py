"""Norms, energies, estimated inequality constants, and decay fitting.

Everything here measures; nothing here changes the computation.  The
extremal Rayleigh quotients behind the coercivity/continuity and Poincare
constants are computed by inverse or power iteration on the matrix pencil,
with the shared constant kernel deflated by routing every inner solve
through the mean-constrained bordered factorization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forms import FormSet
from .projection import MeanConstrainedSolver, SmoothTarget
from .space import Space, field_grads_at_volume_points, field_values_at_volume_points


# ---------------------------------------------------------------------------
# norms and energy

def l2_norm(mass, coeffs: np.ndarray) -> float:
    return float(np.sqrt(max(coeffs @ (mass @ coeffs), 0.0)))


def l2_error(mass, a: np.ndarray, b: np.ndarray) -> float:
    d = a - b
    return float(np.sqrt(max(d @ (mass @ d), 0.0)))


def energy(space: Space, coeffs: np.ndarray, eps: float) -> float:
    """Free energy: quartic double well plus squared-gradient term.

    E = int 1/4 (phi^2 - 1)^2 + eps^2/2 |grad phi|^2, evaluated with the
    volume rule (declared convention; the quartic term of a quadratic field
    slightly exceeds the rule's degree).
    """
    w = space.volume_rule.weights
    vals = field_values_at_volume_points(space, coeffs)
    grads = field_grads_at_volume_points(space, coeffs)
    well = 0.25 * (vals * vals - 1.0) ** 2
    gsq = 0.5 * eps * eps * np.sum(grads * grads, axis=2)
    return float(np.einsum("t,q,tq->", space.detB, w, well + gsq))


def norm_2h_error(
    space: Space, coeffs: np.ndarray, target: SmoothTarget, sigma: float
) -> float:
    """Mesh-dependent norm of (target - field) for a smooth target.

    Broken Hessian differences by volume quadrature plus penalty-weighted
    differences of normal-derivative jumps on every edge (the target's
    jumps vanish on interior edges and equal -n . grad on the boundary).
    """
    qp = space.qp_phys
    w = space.volume_rule.weights
    th = target.hess(qp[..., 0].ravel(), qp[..., 1].ravel())
    th = th.reshape(qp.shape[0], qp.shape[1], 2, 2)
    fh = np.einsum("ti,tiab->tab", coeffs[space.tri_dofs], space.phys_hess)
    diff = th - fh[:, None, :, :]
    total = np.einsum("t,q,tqab,tqab->", space.detB, w, diff, diff)

    tr = space.edge_traces
    mesh = space.mesh
    fj = np.einsum("eqa,ea->eq", tr.jump, coeffs[tr.dofs])
    tj = np.zeros_like(fj)
    bnd = mesh.boundary_edges
    tg = target.grad(tr.points[bnd, :, 0].ravel(), tr.points[bnd, :, 1].ravel())
    tg = tg.reshape(len(bnd), tr.points.shape[1], 2)
    tj[bnd] = -np.einsum("eqa,ea->eq", tg, mesh.edge_normal[bnd])
    # sigma/|e| times the edge integral of the squared jump difference;
    # the edge lengths cancel as in the penalty assembly
    total += sigma * np.einsum("q,eq->", tr.weights, (tj - fj) ** 2)
    return float(np.sqrt(max(total, 0.0)))


# ---------------------------------------------------------------------------
# extremal Rayleigh quotients with constant-mode deflation

def _rayleigh_extremes(
    numerator,
    denominator,
    mvec: np.ndarray,
    mode: str,
    tol: float,
    max_iter: int,
    seed: int,
):
    """Extremal generalized Rayleigh quotient x'Nx / x'Dx on zero-mean fields.

    mode 'min' runs inverse iteration (solves with the numerator matrix),
    mode 'max' runs power iteration (solves with the denominator matrix).
    Every solve is mean-constrained, which deflates the shared constant
    kernel exactly.
    """
    n = numerator.shape[0]
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n)
    x -= x.mean()

    if mode == "min":
        solver = MeanConstrainedSolver(numerator, mvec)
        apply_other = lambda v: denominator @ v
    elif mode == "max":
        solver = MeanConstrainedSolver(denominator, mvec)
        apply_other = lambda v: numerator @ v
    else:
        raise ValueError("mode must be 'min' or 'max'")

    def quotient(v):
        num = float(v @ (numerator @ v))
        den = float(v @ (denominator @ v))
        if den <= 0.0:
            raise RuntimeError("denominator form lost definiteness")
        return num / den

    # Phase 1: plain iteration with a single cached factorization.  This
    # settles into the extreme cluster quickly; the quotient approaches the
    # extreme eigenvalue from inside the spectrum.
    rho = None
    it = 0
    crude = max(tol, 1e-4)
    for it in range(1, max_iter + 1):
        y, _ = solver.solve(apply_other(x), mean=0.0)
        ny = np.linalg.norm(y)
        if ny == 0.0:
            raise RuntimeError("iteration collapsed to the zero vector")
        x = y / ny
        rho_new = quotient(x)
        if rho is not None and abs(rho_new - rho) <= crude * abs(rho_new):
            rho = rho_new
            break
        rho = rho_new
    bound = rho

    # Phase 2: shifted inverse iteration with the quotient as the moving
    # shift, which converges cubically even when the extreme end of the
    # spectrum is clustered.  Each step refactors the bordered matrix.
    for polish in range(40):
        shift = rho
        try:
            shifted = MeanConstrainedSolver(
                (numerator - shift * denominator).tocsc(), mvec
            )
        except RuntimeError:
            shift *= 1.0 + 1e-10
            shifted = MeanConstrainedSolver(
                (numerator - shift * denominator).tocsc(), mvec
            )
        y, _ = shifted.solve(denominator @ x, mean=0.0)
        ny = np.linalg.norm(y)
        if ny == 0.0 or not np.all(np.isfinite(y)):
            break
        x = y / ny
        rho_new = quotient(x)
        if abs(rho_new - rho) <= tol * abs(rho_new):
            return rho_new, it + polish + 1
        rho = rho_new

    # The quotient of any iterate is a valid inner bound; accept it only if
    # the polish stopped moving, otherwise report the failure honestly.
    if abs(rho - bound) <= max(10.0 * crude * abs(rho), abs(rho) * 1e-3):
        return rho, it
    raise RuntimeError(
        "Rayleigh iteration (%s) did not reach tolerance %.1e" % (mode, tol)
    )


def estimate_coercivity_continuity(
    space: Space,
    sigma: float,
    fs: FormSet | None = None,
    tol: float = 1e-8,
    max_iter: int = 5000,
    seed: int = 7,
) -> tuple[float, float]:
    """Extremal ratios of the penalty form against the squared mesh norm.

    Returns (coercivity, continuity): the smallest and largest generalized
    eigenvalues of the penalty form against the norm Gram matrix over
    zero-mean fields.  Jump-free and penalty-only fields realize the ratio
    one exactly, so the pair always straddles 1.
    """
    fs = fs or FormSet(space)
    A = fs.cip(sigma).matrix
    G = fs.norm_gram(sigma)
    mvec = fs.mass.matrix @ np.ones(space.num_dofs)
    c_coer, _ = _rayleigh_extremes(A, G, mvec, "min", tol, max_iter, seed)
    c_cont, _ = _rayleigh_extremes(A, G, mvec, "max", tol, max_iter, seed + 1)
    return c_coer, c_cont


def estimate_poincare(
    space: Space,
    sigma: float,
    fs: FormSet | None = None,
    tol: float = 1e-8,
    max_iter: int = 5000,
    seed: int = 11,
) -> float:
    """Constant covering both Poincare-type inequalities used in reports.

    max of sup ||v|| / ||grad v|| over zero-mean fields and
    sup ||grad v|| / ||v||_{2,h}.
    """
    fs = fs or FormSet(space)
    M = fs.mass.matrix
    K = fs.stiffness.matrix
    G = fs.norm_gram(sigma)
    mvec = M @ np.ones(space.num_dofs)
    lam_min, _ = _rayleigh_extremes(K, M, mvec, "min", tol, max_iter, seed)
    c1 = 1.0 / np.sqrt(lam_min)
    lam_max, _ = _rayleigh_extremes(K, G, mvec, "max", tol, max_iter, seed + 1)
    c2 = np.sqrt(lam_max)
    return float(max(c1, c2))


@dataclass
class AnalysisConstants:
    """Estimated inequality constants, tagged with where they came from."""

    n: int
    sigma: float
    c_coer: float
    c_cont: float
    c_p: float
    c_i: float = 1.0
    c_inf: float = float("nan")
    c_data: float = float("nan")
    cdata_prime: float = 1.0

    @classmethod
    def textbook(cls) -> "AnalysisConstants":
        """All-ones preset for reading off threshold formulas."""
        return cls(n=0, sigma=float("nan"), c_coer=1.0, c_cont=1.0,
                   c_p=1.0, c_i=1.0, c_inf=1.0, c_data=1.0, cdata_prime=1.0)


def estimate_constants(
    space: Space,
    sigma: float,
    fs: FormSet | None = None,
    c_inf: float = float("nan"),
    c_data: float = float("nan"),
) -> AnalysisConstants:
    fs = fs or FormSet(space)
    c_coer, c_cont = estimate_coercivity_continuity(space, sigma, fs=fs)
    c_p = estimate_poincare(space, sigma, fs=fs)
    return AnalysisConstants(
        n=space.mesh.n, sigma=sigma, c_coer=c_coer, c_cont=c_cont,
        c_p=c_p, c_inf=c_inf, c_data=c_data,
    )


def verify_grad_split(
    space: Space,
    sigma: float,
    fs: FormSet | None = None,
    npairs: int = 1000,
    seed: int = 3,
) -> float:
    """Largest sampled ratio |(grad w, grad v)| / (||w||_{2,h} ||v||_L2).

    The split bound says this never exceeds sqrt(2); callers assert against
    that with a small float cushion.
    """
    fs = fs or FormSet(space)
    M = fs.mass.matrix
    K = fs.stiffness.matrix
    G = fs.norm_gram(sigma)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(npairs):
        w = rng.standard_normal(space.num_dofs)
        v = w if i % 10 == 9 else rng.standard_normal(space.num_dofs)
        nw = np.sqrt(max(w @ (G @ w), 0.0))
        nv = np.sqrt(max(v @ (M @ v), 0.0))
        if nw < 1e-14 or nv < 1e-14:
            continue
        ratio = abs(w @ (K @ v)) / (nw * nv)
        worst = max(worst, ratio)
    return worst


# ---------------------------------------------------------------------------
# decay envelope fitting

@dataclass
class DecayFit:
    """Geometric decay fit of an error series toward its plateau.

    ratio r > 1 means the excess over the plateau shrinks by 1/r per step;
    rate = -log(r) is negative for decaying series.  decaying is False when
    the fit window is degenerate or the fitted rate is not negative.
    """

    ratio: float
    rate: float
    plateau: float
    window: tuple[int, int]
    decaying: bool


def fit_decay_envelope(errors: np.ndarray, min_points: int = 4) -> DecayFit:
    """Fit error_m = a * r^(-m) + plateau on the pre-plateau window.

    The plateau is the median of the last tenth of the series; the fit
    window starts at step 2 and ends where the error first drops below ten
    times the plateau.  A least squares line through log(error - plateau)
    on that window gives the per-step ratio.
    """
    e = np.asarray(errors, dtype=float)
    if e.ndim != 1 or e.size < 20:
        raise ValueError("need a 1-d error series with at least 20 entries")
    tail = max(1, e.size // 10)
    plateau = float(np.median(e[-tail:]))

    start = 2
    below = np.flatnonzero(e[start:] < 10.0 * plateau)
    end = start + int(below[0]) if below.size else e.size
    window = (start, end)

    idx = np.arange(start, end)
    excess = e[start:end] - plateau
    keep = excess > 0.0
    idx = idx[keep]
    excess = excess[keep]
    if idx.size < min_points:
        return DecayFit(float("nan"), float("nan"), plateau, window, False)

    slope, _ = np.polyfit(idx, np.log(excess), 1)
    ratio = float(np.exp(-slope))
    rate = float(slope)
    return DecayFit(ratio, rate, plateau, window, bool(rate < 0.0))
