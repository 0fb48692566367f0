"""Twin experiments: truth generation, assimilated runs, and sweeps.

A manifest fixes everything about an experiment batch: mesh resolution,
model and solver parameters, the nudging weight and coarse spacing lists,
initial data selection, seed, output directory, and snapshot times.  The
truth trajectory is the unnudged run from the projected cross layout; twin
runs start from uninformed initial data and are nudged toward coarse
observations of the truth.  Sweep members are independent given the shared
read-only truth store and can run in a process pool.  Every artifact
written carries the sha256 hash of the manifest that produced it.
"""

from __future__ import annotations

import hashlib
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .diagnostics import AnalysisConstants, estimate_constants
from .forms import FormSet
from .io import (
    write_averages_csv,
    write_field_vtk,
    write_runlog_csv,
    write_semilog_svg,
)
from .mesh import build_uniform_mesh
from .observation import (
    assemble_nudging,
    build_observation_grid,
    indicator_mass,
    project_IH,
)
from .projection import project_initial_data
from .space import build_space
from .stepper import RunLog, StepperConfig, condition_report, run


@dataclass(frozen=True)
class RunManifest:
    """Complete description of an experiment batch."""

    n: int = 32
    eps: float = 0.05
    sigma: float = 5.0
    dt: float = 0.002
    T: float = 1.0
    omegas: tuple = (1.0, 20.0, 400.0, 1000.0, 5000.0)
    hs: tuple = (0.125, 0.0625, 0.03125)
    assimilate_omega: float = 400.0
    assimilate_h: float = 0.03125
    ic: str = "random"
    ic_file: str = ""
    seed: int = 1234
    outdir: str = "runs"
    snapshot_times: tuple = (0.0, 0.002, 0.01, 0.05, 1.0)
    workers: int = 1
    indicator: bool = True

    @property
    def nsteps(self) -> int:
        m = int(round(self.T / self.dt))
        if abs(m * self.dt - self.T) > 1e-9 or m < 1:
            raise ValueError("T must be a positive multiple of dt")
        return m


_TUPLE_FIELDS = {"omegas", "hs", "snapshot_times"}
_INT_FIELDS = {"n", "seed", "workers"}
_FLOAT_FIELDS = {"eps", "sigma", "dt", "T", "assimilate_omega", "assimilate_h"}
_BOOL_FIELDS = {"indicator"}


def manifest_to_text(m: RunManifest) -> str:
    lines = []
    for f in sorted(fields(RunManifest), key=lambda f: f.name):
        v = getattr(m, f.name)
        if f.name in _TUPLE_FIELDS:
            v = ",".join("%.17g" % x for x in v)
        lines.append("%s = %s" % (f.name, v))
    return "\n".join(lines) + "\n"


def manifest_hash(m: RunManifest) -> str:
    return hashlib.sha256(manifest_to_text(m).encode()).hexdigest()[:16]


def parse_config_text(text: str) -> dict:
    """Flat key = value lines; '#' starts a comment, blank lines ignored."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError("config line %d is not key = value: %r" % (lineno, raw))
        key, val = line.split("=", 1)
        out[key.strip()] = val.strip()
    return out


def manifest_from_mapping(values: dict, base: RunManifest | None = None) -> RunManifest:
    """Build a manifest from string key/value pairs over a base manifest."""
    base = base or RunManifest()
    known = {f.name for f in fields(RunManifest)}
    kwargs = {}
    for key, val in values.items():
        if key not in known:
            raise ValueError("unknown config key %r" % key)
        if key in _TUPLE_FIELDS:
            kwargs[key] = tuple(
                float(x) for x in str(val).split(",") if str(x).strip()
            )
        elif key in _INT_FIELDS:
            kwargs[key] = int(val)
        elif key in _FLOAT_FIELDS:
            kwargs[key] = float(val)
        elif key in _BOOL_FIELDS:
            sval = str(val).strip().lower()
            if sval in ("1", "true", "yes", "on"):
                kwargs[key] = True
            elif sval in ("0", "false", "no", "off"):
                kwargs[key] = False
            else:
                raise ValueError("bad boolean for %s: %r" % (key, val))
        else:
            kwargs[key] = str(val)
    return replace(base, **kwargs)


def load_manifest(config_path: str | None, overrides: dict) -> RunManifest:
    base = RunManifest()
    if config_path:
        with open(config_path) as fh:
            base = manifest_from_mapping(parse_config_text(fh.read()), base)
    return manifest_from_mapping(overrides, base)


# ---------------------------------------------------------------------------
# truth stores

class MemoryStore:
    """Trajectory kept as one (nsteps + 1, ndof) array."""

    def __init__(self, ndof: int, nsteps: int, data: np.ndarray | None = None):
        if data is not None:
            self.data = np.asarray(data, dtype=float)
        else:
            self.data = np.full((nsteps + 1, ndof), np.nan)

    @property
    def nsteps(self) -> int:
        return self.data.shape[0] - 1

    def put(self, m: int, values: np.ndarray) -> None:
        self.data[m] = values

    def coeffs(self, m: int) -> np.ndarray:
        return self.data[m]


class DirectoryStore:
    """Trajectory streamed to disk, one npy file per step plus metadata."""

    def __init__(self, path: str, manifest: RunManifest | None = None):
        self.path = path
        os.makedirs(path, exist_ok=True)
        if manifest is not None:
            self.manifest = manifest
            with open(os.path.join(path, "manifest.cfg"), "w") as fh:
                fh.write(manifest_to_text(manifest))

    @classmethod
    def open(cls, path: str) -> "DirectoryStore":
        store = cls(path)
        with open(os.path.join(path, "manifest.cfg")) as fh:
            store.manifest = manifest_from_mapping(
                parse_config_text(fh.read())
            )
        return store

    @property
    def nsteps(self) -> int:
        return self.manifest.nsteps

    def _file(self, m: int) -> str:
        return os.path.join(self.path, "step_%06d.npy" % m)

    def put(self, m: int, values: np.ndarray) -> None:
        np.save(self._file(m), np.asarray(values, dtype=float))

    def coeffs(self, m: int) -> np.ndarray:
        return np.load(self._file(m))

    def to_memory(self) -> MemoryStore:
        first = self.coeffs(0)
        data = np.full((self.nsteps + 1, first.size), np.nan)
        for m in range(self.nsteps + 1):
            data[m] = self.coeffs(m)
        return MemoryStore(first.size, self.nsteps, data=data)


# ---------------------------------------------------------------------------
# building blocks

def build_formset(manifest: RunManifest) -> FormSet:
    return FormSet(build_space(build_uniform_mesh(manifest.n)))


def stepper_config(manifest: RunManifest, omega: float) -> StepperConfig:
    return StepperConfig(
        dt=manifest.dt, eps=manifest.eps, sigma=manifest.sigma, omega=omega
    )


def generate_truth(
    manifest: RunManifest,
    fs: FormSet | None = None,
    store=None,
) -> tuple[object, RunLog]:
    """Unnudged reference run from the projected cross layout."""
    fs = fs or build_formset(manifest)
    space = fs.space
    if store is None:
        store = MemoryStore(space.num_dofs, manifest.nsteps)
    phi0 = project_initial_data(
        space, "cross", manifest.sigma, eps=manifest.eps, fs=fs
    )
    log = run(
        fs, phi0, stepper_config(manifest, 0.0), manifest.nsteps,
        store=store, label="truth",
    )
    return store, log


@dataclass
class MemberResult:
    """One run of a sweep: its log, snapshots, and coarse averages."""

    label: str
    omega: float
    H: float
    log: RunLog
    snapshots: dict = field(default_factory=dict)
    averages: dict = field(default_factory=dict)


def run_assimilated(
    manifest: RunManifest,
    fs: FormSet,
    truth,
    omega: float,
    H: float,
    label: str = "",
) -> MemberResult:
    """One nudged (or, at omega = 0, control) run against a truth store."""
    space = fs.space
    grid = None
    nudge = None
    if omega != 0.0:
        grid = build_observation_grid(space, H)
        if manifest.indicator:
            nudge = (omega * indicator_mass(grid)).tocsr()
        else:
            nudge = (omega * assemble_nudging(grid).matrix).tocsr()

    coeffs = None
    if manifest.ic == "file":
        coeffs = np.load(manifest.ic_file)
    phi0 = project_initial_data(
        space, manifest.ic, manifest.sigma, eps=manifest.eps,
        seed=manifest.seed, fs=fs, coeffs=coeffs,
    )
    store = MemoryStore(space.num_dofs, manifest.nsteps)
    store.put(0, phi0.values)
    log = run(
        fs, phi0, stepper_config(manifest, omega), manifest.nsteps,
        truth=truth, nudge_matrix=nudge, store=store, label=label,
    )

    last = int(log.steps[-1])
    snapshots = {}
    averages = {}
    for t_req in manifest.snapshot_times:
        s = int(round(t_req / manifest.dt))
        if 0 <= s <= last:
            snap = store.coeffs(s).copy()
            snapshots[t_req] = snap
            if grid is not None:
                averages[t_req] = project_IH(grid, snap)
    return MemberResult(
        label=label or ("omega=%g H=%g" % (omega, H)),
        omega=omega, H=H, log=log, snapshots=snapshots, averages=averages,
    )


def _member_task(payload):
    manifest, truth_data, omega, H, label = payload
    fs = build_formset(manifest)
    truth = MemoryStore(truth_data.shape[1], truth_data.shape[0] - 1,
                        data=truth_data)
    return run_assimilated(manifest, fs, truth, omega, H, label)


def _run_members(manifest: RunManifest, fs: FormSet, truth, members):
    """Run (omega, H, label) members serially or in a process pool."""
    if manifest.workers <= 1:
        return [
            run_assimilated(manifest, fs, truth, omega, H, label)
            for omega, H, label in members
        ]
    if isinstance(truth, MemoryStore):
        truth_data = truth.data
    else:
        truth_data = truth.to_memory().data
    payloads = [
        (manifest, truth_data, omega, H, label) for omega, H, label in members
    ]
    with ProcessPoolExecutor(max_workers=manifest.workers) as pool:
        results = list(pool.map(_member_task, payloads))
    return results


@dataclass
class SweepResult:
    manifest: RunManifest
    truth_log: RunLog | None
    members: list

    @property
    def all_completed(self) -> bool:
        logs = [m.log for m in self.members]
        if self.truth_log is not None:
            logs.append(self.truth_log)
        return all(log.completed for log in logs)


def experiment_h_sweep(
    manifest: RunManifest,
    fs: FormSet | None = None,
    truth=None,
    truth_log: RunLog | None = None,
) -> SweepResult:
    """Assimilated runs at the fixed nudging weight over the H list."""
    fs = fs or build_formset(manifest)
    if truth is None:
        truth, truth_log = generate_truth(manifest, fs=fs)
    members = [
        (manifest.assimilate_omega, H, "H=%g" % H) for H in manifest.hs
    ]
    results = _run_members(manifest, fs, truth, members)
    return SweepResult(manifest, truth_log, results)


def experiment_omega_sweep(
    manifest: RunManifest,
    fs: FormSet | None = None,
    truth=None,
    truth_log: RunLog | None = None,
) -> SweepResult:
    """Assimilated runs at the fixed coarse spacing over the omega list."""
    fs = fs or build_formset(manifest)
    if truth is None:
        truth, truth_log = generate_truth(manifest, fs=fs)
    members = [
        (omega, manifest.assimilate_h, "omega=%g" % omega)
        for omega in manifest.omegas
    ]
    results = _run_members(manifest, fs, truth, members)
    return SweepResult(manifest, truth_log, results)


# ---------------------------------------------------------------------------
# artifact emission

def _slug(text: str) -> str:
    return text.replace("=", "").replace(".", "p").replace(" ", "_")


def emit_run_artifacts(
    outdir: str,
    name: str,
    log: RunLog,
    space,
    snapshots: dict,
    mhash: str,
    grid=None,
    averages: dict | None = None,
) -> None:
    """CSV log plus VTK snapshots (and coarse-average CSVs) for one run."""
    os.makedirs(outdir, exist_ok=True)
    write_runlog_csv(log, os.path.join(outdir, "%s.csv" % name), mhash)
    for t_req in sorted(snapshots):
        write_field_vtk(
            space,
            snapshots[t_req],
            os.path.join(outdir, "%s_t%s.vtk" % (name, ("%g" % t_req))),
            manifest_hash=mhash,
        )
    if grid is not None and averages:
        for t_req in sorted(averages):
            write_averages_csv(
                grid,
                averages[t_req],
                t_req,
                os.path.join(
                    outdir, "%s_coarse_t%s.csv" % (name, ("%g" % t_req))
                ),
                manifest_hash=mhash,
            )


def emit_sweep_artifacts(result: SweepResult, outdir: str, kind: str) -> None:
    """All artifacts of a sweep: per-run files plus the combined error plot."""
    manifest = result.manifest
    mhash = manifest_hash(manifest)
    os.makedirs(outdir, exist_ok=True)
    with open(os.path.join(outdir, "config.cfg"), "w") as fh:
        fh.write("# manifest_hash=%s\n" % mhash)
        fh.write(manifest_to_text(manifest))

    sp = _space_for(manifest)
    curves = []
    for member in result.members:
        name = _slug(member.label)
        gr = None
        if member.omega != 0.0:
            gr = build_observation_grid(sp, member.H)
        emit_run_artifacts(
            outdir, name, member.log, sp, member.snapshots, mhash,
            grid=gr, averages=member.averages,
        )
        curves.append((member.label, member.log.t, member.log.l2_error))
    if result.truth_log is not None:
        write_runlog_csv(
            result.truth_log, os.path.join(outdir, "truth.csv"), mhash
        )
    write_semilog_svg(
        os.path.join(outdir, "%s_errors.svg" % kind),
        curves,
        title="error vs truth (%s sweep)" % kind,
        manifest_hash=mhash,
    )


_SPACE_CACHE: dict = {}


def _space_for(manifest: RunManifest):
    key = manifest.n
    if key not in _SPACE_CACHE:
        _SPACE_CACHE[key] = build_space(build_uniform_mesh(manifest.n))
    return _SPACE_CACHE[key]


# ---------------------------------------------------------------------------
# constants report

def write_report(
    manifest: RunManifest,
    path: str,
    constants: AnalysisConstants | None = None,
    fs: FormSet | None = None,
) -> AnalysisConstants:
    """Estimate constants on the manifest's mesh and report thresholds."""
    if constants is None:
        fs = fs or build_formset(manifest)
        constants = estimate_constants(fs.space, manifest.sigma, fs=fs)
    mhash = manifest_hash(manifest)
    lines = [
        "# manifest_hash=%s" % mhash,
        "mesh n = %d, sigma = %g, eps = %g, dt = %g" % (
            manifest.n, manifest.sigma, manifest.eps, manifest.dt
        ),
        "estimated constants:",
        "  coercivity  = %.6g" % constants.c_coer,
        "  continuity  = %.6g" % constants.c_cont,
        "  poincare    = %.6g" % constants.c_p,
        "  averaging   = %.6g" % constants.c_i,
        "  sup-norm    = %s" % constants.c_inf,
        "  state-bound = %s" % constants.c_data,
        "",
        "thresholds (sufficient conditions; conservative by construction,",
        "negative values at practical parameters are expected and do not",
        "gate any computation):",
    ]
    for omega in manifest.omegas:
        rep = condition_report(
            omega, manifest.assimilate_h, manifest.dt, manifest.eps, constants
        )
        lines.append(
            "  omega=%-8g H=%g : lambda0=%.4g lambda1=%.4g "
            "uniqueness margin=%.4g" % (
                omega, manifest.assimilate_h,
                rep.lambda0, rep.lambda1, rep.uniqueness_margin,
            )
        )
    text = "\n".join(lines) + "\n"
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w") as fh:
        fh.write(text)
    return constants
