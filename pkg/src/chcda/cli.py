"""Command line entry points for the twin-experiment harness.

Subcommands: truth, assimilate, sweep-h, sweep-omega, report.  Parameters
come from an optional flat key = value config file with command line flags
taking precedence.  Output lands under the manifest's output directory,
resolved against the CHCDA_OUTPUT_ROOT environment variable when that is
set and the directory is relative.  The process exits 0 only if every run
it launched completed.
"""

from __future__ import annotations

import argparse
import os
import sys

from .experiments import (
    DirectoryStore,
    RunManifest,
    build_formset,
    emit_run_artifacts,
    emit_sweep_artifacts,
    experiment_h_sweep,
    experiment_omega_sweep,
    generate_truth,
    load_manifest,
    manifest_hash,
    run_assimilated,
    write_report,
)
from .io import write_semilog_svg
from .observation import build_observation_grid

ENV_OUTPUT_ROOT = "CHCDA_OUTPUT_ROOT"

_TRUTH_MATCH_FIELDS = ("n", "dt", "T", "eps", "sigma")


def _resolve_outdir(outdir: str) -> str:
    root = os.environ.get(ENV_OUTPUT_ROOT, "")
    if root and not os.path.isabs(outdir):
        return os.path.join(root, outdir)
    return outdir


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--out", help="output directory (overrides config outdir)")
    p.add_argument("--n", type=int, help="mesh squares per side")
    p.add_argument("--dt", type=float, help="time step")
    p.add_argument("--T", type=float, help="final time")
    p.add_argument("--eps", type=float, help="interface width parameter")
    p.add_argument("--sigma", type=float, help="penalty parameter")
    p.add_argument("--seed", type=int, help="seed for random initial data")
    p.add_argument("--workers", type=int, help="process pool size for sweeps")
    p.add_argument("--omegas", help="comma separated nudging weight list")
    p.add_argument("--hs", help="comma separated coarse spacing list")
    p.add_argument("--snapshot-times", dest="snapshot_times",
                   help="comma separated snapshot times")
    p.add_argument("--ic", choices=("cross", "random", "file", "zero"),
                   help="initial data for assimilated runs")
    p.add_argument("--ic-file", dest="ic_file",
                   help="npy coefficient file for --ic file")
    p.add_argument("--indicator", action=argparse.BooleanOptionalAction,
                   default=None,
                   help="observation term: masked nodes (default) or, with "
                        "--no-indicator, coarse cell averages")


def _manifest_from_args(args) -> RunManifest:
    overrides = {}
    for key in ("n", "dt", "T", "eps", "sigma", "seed", "workers",
                "omegas", "hs", "snapshot_times", "ic", "ic_file"):
        val = getattr(args, key, None)
        if val is not None:
            overrides[key] = val
    if getattr(args, "out", None):
        overrides["outdir"] = args.out
    if getattr(args, "indicator", None) is not None:
        overrides["indicator"] = "true" if args.indicator else "false"
    if getattr(args, "omega", None) is not None:
        overrides["assimilate_omega"] = args.omega
    if getattr(args, "H", None) is not None:
        overrides["assimilate_h"] = args.H
    return load_manifest(getattr(args, "config", None), overrides)


def _load_truth(path: str, manifest: RunManifest) -> DirectoryStore:
    store = DirectoryStore.open(path)
    for fname in _TRUTH_MATCH_FIELDS:
        have = getattr(store.manifest, fname)
        want = getattr(manifest, fname)
        if have != want:
            raise SystemExit(
                "truth store %s was produced with %s=%s, requested %s=%s"
                % (path, fname, have, fname, want)
            )
    return store


def _truth_snapshots(manifest: RunManifest, store, last_step: int) -> dict:
    snaps = {}
    for t_req in manifest.snapshot_times:
        s = int(round(t_req / manifest.dt))
        if 0 <= s <= last_step:
            snaps[t_req] = store.coeffs(s)
    return snaps


def cmd_truth(args) -> int:
    manifest = _manifest_from_args(args)
    outdir = _resolve_outdir(manifest.outdir)
    fs = build_formset(manifest)
    store = DirectoryStore(os.path.join(outdir, "truth"), manifest=manifest)
    _, log = generate_truth(manifest, fs=fs, store=store)
    mhash = manifest_hash(manifest)
    emit_run_artifacts(
        os.path.join(outdir, "truth"), "truth", log, fs.space,
        _truth_snapshots(manifest, store, int(log.steps[-1])), mhash,
    )
    print("truth: %s (%d steps) -> %s" % (log.completion, log.steps[-1], outdir))
    return 0 if log.completed else 1


def _obtain_truth(args, manifest: RunManifest, fs, outdir: str):
    """Load the truth store named on the command line or generate one."""
    if getattr(args, "truth", None):
        store = _load_truth(args.truth, manifest)
        return store, None
    store = DirectoryStore(os.path.join(outdir, "truth"), manifest=manifest)
    _, log = generate_truth(manifest, fs=fs, store=store)
    mhash = manifest_hash(manifest)
    emit_run_artifacts(
        os.path.join(outdir, "truth"), "truth", log, fs.space,
        _truth_snapshots(manifest, store, int(log.steps[-1])), mhash,
    )
    return store, log


def cmd_assimilate(args) -> int:
    manifest = _manifest_from_args(args)
    outdir = _resolve_outdir(manifest.outdir)
    fs = build_formset(manifest)
    truth, truth_log = _obtain_truth(args, manifest, fs, outdir)
    if truth_log is not None and not truth_log.completed:
        print("truth run failed: %s" % truth_log.completion, file=sys.stderr)
        return 1

    member = run_assimilated(
        manifest, fs, truth, manifest.assimilate_omega, manifest.assimilate_h,
        label="omega=%g H=%g" % (manifest.assimilate_omega, manifest.assimilate_h),
    )
    mhash = manifest_hash(manifest)
    rundir = os.path.join(outdir, "assimilate")
    grid = None
    if member.omega != 0.0:
        grid = build_observation_grid(fs.space, member.H)
    emit_run_artifacts(
        rundir, "assimilated", member.log, fs.space, member.snapshots, mhash,
        grid=grid, averages=member.averages,
    )
    write_semilog_svg(
        os.path.join(rundir, "assimilated_errors.svg"),
        [(member.label, member.log.t, member.log.l2_error)],
        title="error vs truth",
        manifest_hash=mhash,
    )
    print("assimilate: %s -> %s" % (member.log.completion, rundir))
    return 0 if member.log.completed else 1


def _cmd_sweep(args, which: str) -> int:
    manifest = _manifest_from_args(args)
    outdir = _resolve_outdir(manifest.outdir)
    fs = build_formset(manifest)
    truth, truth_log = _obtain_truth(args, manifest, fs, outdir)
    if truth_log is not None and not truth_log.completed:
        print("truth run failed: %s" % truth_log.completion, file=sys.stderr)
        return 1

    if which == "h":
        result = experiment_h_sweep(manifest, fs=fs, truth=truth,
                                    truth_log=truth_log)
        subdir = os.path.join(outdir, "sweep_h")
    else:
        result = experiment_omega_sweep(manifest, fs=fs, truth=truth,
                                        truth_log=truth_log)
        subdir = os.path.join(outdir, "sweep_omega")
    emit_sweep_artifacts(result, subdir, which)
    for member in result.members:
        print("  %-16s %s" % (member.label, member.log.completion))
    ok = result.all_completed
    print("sweep-%s: %s -> %s" % (which, "ok" if ok else "FAILED", subdir))
    return 0 if ok else 1


def cmd_sweep_h(args) -> int:
    return _cmd_sweep(args, "h")


def cmd_sweep_omega(args) -> int:
    return _cmd_sweep(args, "omega")


def cmd_report(args) -> int:
    manifest = _manifest_from_args(args)
    outdir = _resolve_outdir(manifest.outdir)
    path = os.path.join(outdir, "report.txt")
    write_report(manifest, path)
    with open(path) as fh:
        sys.stdout.write(fh.read())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chcda",
        description="Phase-field solver with coarse-grid nudging: "
                    "twin-experiment harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("truth", help="run the unnudged reference trajectory")
    _add_common(p)
    p.set_defaults(func=cmd_truth)

    p = sub.add_parser("assimilate", help="run one nudged twin against truth")
    _add_common(p)
    p.add_argument("--truth", help="existing truth store directory")
    p.add_argument("--omega", type=float, help="nudging weight")
    p.add_argument("--H", type=float, help="coarse cell size")
    p.set_defaults(func=cmd_assimilate)

    p = sub.add_parser("sweep-h", help="assimilated runs over the H list")
    _add_common(p)
    p.add_argument("--truth", help="existing truth store directory")
    p.add_argument("--omega", type=float, help="nudging weight for all members")
    p.set_defaults(func=cmd_sweep_h)

    p = sub.add_parser("sweep-omega", help="assimilated runs over the omega list")
    _add_common(p)
    p.add_argument("--truth", help="existing truth store directory")
    p.add_argument("--H", type=float, help="coarse cell size for all members")
    p.set_defaults(func=cmd_sweep_omega)

    p = sub.add_parser("report", help="estimated constants and thresholds")
    _add_common(p)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SystemExit:
        raise
    except Exception as exc:  # surface failures as a nonzero exit, not a trace
        print("error: %s" % exc, file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
