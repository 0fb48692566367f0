"""Semi-implicit time stepping with Newton inner solves.

Each step treats the cubic part of the chemical potential implicitly and
the linear part explicitly, keeps the full fourth-order penalty operator
implicit, and adds the coarse-grid nudging term when observations are
present.  The nonlinear system is solved by Newton iteration with a sparse
direct factorization of the exact Jacobian; a halving line search engages
only when a full step would increase the residual.  Stability and
uniqueness thresholds derived from the estimated constants are computed
for reporting only and never gate the computation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import splu

from .diagnostics import AnalysisConstants, energy as free_energy, l2_error, l2_norm
from .forms import FormSet, assemble_jacobian, assemble_residual
from .space import Field


@dataclass
class StepperConfig:
    """Time step, model, and solver parameters for one run."""

    dt: float = 0.002
    eps: float = 0.05
    sigma: float = 5.0
    omega: float = 0.0
    newton_tol: float = 1e-10
    newton_max: int = 30
    linear_tol: float = 1e-11
    line_search_max: int = 8


@dataclass
class NewtonStats:
    iterations: int
    residual_norms: list
    converged: bool
    line_search_halvings: int = 0


class SolverFailure(RuntimeError):
    """Newton failed to converge; carries the iteration diagnostics."""

    def __init__(self, message: str, stats: NewtonStats):
        super().__init__(message)
        self.stats = stats


def step(
    fs: FormSet,
    phi_prev: np.ndarray,
    cfg: StepperConfig,
    nudge_matrix=None,
    obs_rhs: np.ndarray | None = None,
) -> tuple[np.ndarray, NewtonStats]:
    """Advance one time step from phi_prev; returns (phi_new, stats).

    Convergence is declared when the residual 2-norm falls below
    newton_tol * max(1, initial residual norm).  Raises SolverFailure if
    the iteration budget is exhausted.
    """

    def residual(u):
        return assemble_residual(
            fs, u, phi_prev, cfg.dt, cfg.eps, cfg.sigma,
            nudge_matrix=nudge_matrix, obs_rhs=obs_rhs,
        )

    phi = phi_prev.astype(float).copy()
    r = residual(phi)
    rn = float(np.linalg.norm(r))
    tol_eff = cfg.newton_tol * max(1.0, rn)
    history = [rn]
    halvings = 0

    for it in range(1, cfg.newton_max + 1):
        if rn <= tol_eff:
            return phi, NewtonStats(it - 1, history, True, halvings)
        J = assemble_jacobian(
            fs, phi, cfg.dt, cfg.eps, cfg.sigma, nudge_matrix=nudge_matrix
        )
        lu = splu(J.tocsc())
        delta = lu.solve(-r)
        lin_res = np.linalg.norm(J @ delta + r)
        if lin_res > cfg.linear_tol * max(rn, 1e-300):
            delta += lu.solve(-(J @ delta + r))

        alpha = 1.0
        trial = phi + delta
        r_trial = residual(trial)
        rn_trial = float(np.linalg.norm(r_trial))
        ls = 0
        while rn_trial >= rn and ls < cfg.line_search_max:
            alpha *= 0.5
            ls += 1
            trial = phi + alpha * delta
            r_trial = residual(trial)
            rn_trial = float(np.linalg.norm(r_trial))
        halvings += ls

        phi = trial
        r = r_trial
        rn = rn_trial
        history.append(rn)
        if not np.isfinite(rn):
            stats = NewtonStats(it, history, False, halvings)
            raise SolverFailure("residual became non-finite", stats)

    if rn <= tol_eff:
        return phi, NewtonStats(cfg.newton_max, history, True, halvings)
    stats = NewtonStats(cfg.newton_max, history, False, halvings)
    raise SolverFailure(
        "Newton did not reach %.1e in %d iterations (residual %.3e)"
        % (tol_eff, cfg.newton_max, rn),
        stats,
    )


@dataclass
class RunLog:
    """Per-step scalars and completion status for one run."""

    steps: np.ndarray
    t: np.ndarray
    l2_error: np.ndarray
    energy: np.ndarray
    mass: np.ndarray
    newton_iters: np.ndarray
    completion: str = "completed"
    max_abs_nodal: float = float("nan")
    max_l2: float = float("nan")
    bounded: bool = True
    manifest_hash: str = ""
    label: str = ""

    @property
    def completed(self) -> bool:
        return self.completion == "completed"


def run(
    fs: FormSet,
    phi0: Field,
    cfg: StepperConfig,
    nsteps: int,
    truth=None,
    nudge_matrix=None,
    store=None,
    label: str = "",
) -> RunLog:
    """March nsteps from phi0, logging scalars each step.

    truth, when given, provides coeffs(m) for the observation right-hand
    side (scaled through nudge_matrix, which already carries the nudging
    weight) and for the per-step error column.  store.put(m, values) is
    called for every state including the initial one when a store is given.
    Solver failures end the run early with a failure completion status
    rather than raising.
    """
    space = fs.space
    M = fs.mass.matrix
    ones = np.ones(space.num_dofs)

    phi = phi0.values.astype(float).copy()
    if store is not None:
        store.put(0, phi)

    steps = [0]
    times = [0.0]
    errors = [
        l2_error(M, phi, truth.coeffs(0)) if truth is not None else float("nan")
    ]
    energies = [free_energy(space, phi, cfg.eps)]
    masses = [float(ones @ (M @ phi))]
    iters = [0]
    max_nodal = float(np.max(np.abs(phi)))
    max_l2 = l2_norm(M, phi)
    completion = "completed"

    for m in range(1, nsteps + 1):
        obs_rhs = None
        if truth is not None and nudge_matrix is not None:
            obs_rhs = nudge_matrix @ truth.coeffs(m)
        try:
            phi, stats = step(fs, phi, cfg, nudge_matrix=nudge_matrix,
                              obs_rhs=obs_rhs)
        except SolverFailure as failure:
            completion = "failed at step %d: %s" % (m, failure)
            break
        if not np.all(np.isfinite(phi)):
            completion = "failed at step %d: non-finite state" % m
            break
        if store is not None:
            store.put(m, phi)
        steps.append(m)
        times.append(m * cfg.dt)
        errors.append(
            l2_error(M, phi, truth.coeffs(m)) if truth is not None else float("nan")
        )
        energies.append(free_energy(space, phi, cfg.eps))
        masses.append(float(ones @ (M @ phi)))
        iters.append(stats.iterations)
        max_nodal = max(max_nodal, float(np.max(np.abs(phi))))
        max_l2 = max(max_l2, l2_norm(M, phi))

    initial_norm = l2_norm(M, phi0.values)
    reference = initial_norm
    if truth is not None:
        truth_norms = [l2_norm(M, truth.coeffs(m)) for m in (0, nsteps)]
        reference = max(reference, max(truth_norms))
    bounded = bool(max_l2 <= 2.0 * max(reference, 1e-300))

    return RunLog(
        steps=np.array(steps),
        t=np.array(times),
        l2_error=np.array(errors),
        energy=np.array(energies),
        mass=np.array(masses),
        newton_iters=np.array(iters),
        completion=completion,
        max_abs_nodal=max_nodal,
        max_l2=max_l2,
        bounded=bounded,
        label=label,
    )


# ---------------------------------------------------------------------------
# reported (never enforced) thresholds

@dataclass
class ConditionReport:
    """Decay/uniqueness/convergence thresholds from the a priori analysis.

    All quantities are conservative sufficient conditions evaluated from
    estimated constants; negative thresholds at practical parameters are
    expected and carry no gating power.
    """

    lambda0: float
    lambda1: float
    uniqueness_lhs: float
    uniqueness_rhs: float
    uniqueness_margin: float
    decay_guaranteed: bool
    uniqueness_guaranteed: bool
    convergence_guaranteed: bool
    constants: AnalysisConstants


def condition_report(
    omega: float,
    H: float,
    dt: float,
    eps: float,
    constants: AnalysisConstants,
) -> ConditionReport:
    c = constants
    e2 = eps * eps
    coer = c.c_coer * e2
    cc = (c.c_i * c.c_p * H) ** 2

    lambda0 = (omega * coer - 2.0 * omega * omega * cc - 4.0) / (coer + 4.0 * dt)
    uniq_lhs = 1.0 / dt + omega
    uniq_rhs = (cc * omega * omega + 18.0 * c.c_inf**4) / coer
    lambda1 = (
        coer * omega
        - 4.0 * cc * omega * omega
        - 72.0 * (c.c_inf**2 + c.cdata_prime**2) ** 2
        - 16.0
    ) / (coer + 16.0 * dt)

    margin = uniq_lhs - uniq_rhs
    return ConditionReport(
        lambda0=lambda0,
        lambda1=lambda1,
        uniqueness_lhs=uniq_lhs,
        uniqueness_rhs=uniq_rhs,
        uniqueness_margin=margin,
        decay_guaranteed=bool(lambda0 > 0.0),
        uniqueness_guaranteed=bool(margin > 0.0),
        convergence_guaranteed=bool(lambda1 > 0.0),
        constants=constants,
    )
