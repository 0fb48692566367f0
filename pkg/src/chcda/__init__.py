"""Finite element phase-field solver with coarse-grid nudging.

A C0 interior penalty discretization of the fourth-order phase equation on
the unit square, semi-implicit time stepping with Newton inner solves, a
cell-averaging observation operator for nudging toward a reference
trajectory, and a twin-experiment harness with sweeps, diagnostics, and
artifact emission.
"""

from .diagnostics import (
    AnalysisConstants,
    DecayFit,
    energy,
    estimate_coercivity_continuity,
    estimate_constants,
    fit_decay_envelope,
    l2_error,
    l2_norm,
    norm_2h_error,
    verify_grad_split,
)
from .experiments import (
    DirectoryStore,
    MemoryStore,
    RunManifest,
    build_formset,
    experiment_h_sweep,
    experiment_omega_sweep,
    generate_truth,
    load_manifest,
    manifest_hash,
    run_assimilated,
)
from .forms import (
    AssembledForm,
    FormSet,
    assemble_cip,
    assemble_jacobian,
    assemble_mass,
    assemble_residual,
    assemble_stiffness,
    norm_2h,
)
from .mesh import Mesh, build_uniform_mesh, edge_trace_geometry
from .observation import (
    CoarseObservationGrid,
    assemble_nudging,
    build_observation_grid,
    indicator_variant_rhs,
    observation_rhs,
    project_IH,
)
from .projection import (
    SmoothTarget,
    cosine_product_target,
    cross_phase_target,
    project_initial_data,
    ritz_project,
)
from .space import Field, QuadratureRule, Space, build_space, evaluate_field, interpolate_nodal
from .stepper import (
    ConditionReport,
    NewtonStats,
    RunLog,
    SolverFailure,
    StepperConfig,
    condition_report,
    run,
    step,
)

__version__ = "0.1.0"
