"""Artifact writers: CSV logs, legacy VTK snapshots, semi-log SVG plots.

Every file carries the manifest hash of the run that produced it (a comment
line in CSV and SVG, the free-text title line in VTK), and all numeric
formatting is fixed so that rerunning an identical manifest rewrites
byte-identical artifacts.
"""

from __future__ import annotations

import os

import numpy as np
from scipy.io import mmwrite

RUNLOG_HEADER = "step,t,l2_error,energy,mass,newton_iters"

_SVG_COLORS = (
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
    "#8c564b", "#17becf", "#7f7f7f",
)


def _fmt(x: float) -> str:
    return "%.17g" % float(x)


def write_runlog_csv(log, path: str, manifest_hash: str = "") -> None:
    """Run scalars as CSV with the fixed header."""
    lines = []
    if manifest_hash:
        lines.append("# manifest_hash=%s" % manifest_hash)
    lines.append(RUNLOG_HEADER)
    for k in range(log.steps.size):
        lines.append(
            "%d,%s,%s,%s,%s,%d"
            % (
                int(log.steps[k]),
                _fmt(log.t[k]),
                _fmt(log.l2_error[k]),
                _fmt(log.energy[k]),
                _fmt(log.mass[k]),
                int(log.newton_iters[k]),
            )
        )
    _write_text(path, "\n".join(lines) + "\n")


def write_field_csv(space, coeffs: np.ndarray, path: str,
                    manifest_hash: str = "") -> None:
    """Flat per-node dump: dof index, coordinates, value."""
    lines = []
    if manifest_hash:
        lines.append("# manifest_hash=%s" % manifest_hash)
    lines.append("dof,x,y,value")
    xy = space.node_xy
    for i in range(space.num_dofs):
        lines.append(
            "%d,%s,%s,%s" % (i, _fmt(xy[i, 0]), _fmt(xy[i, 1]), _fmt(coeffs[i]))
        )
    _write_text(path, "\n".join(lines) + "\n")


def write_averages_csv(grid, averages: np.ndarray, t: float, path: str,
                       manifest_hash: str = "") -> None:
    """Coarse cell averages at one time as (t, cell_x, cell_y, value) rows."""
    lines = []
    if manifest_hash:
        lines.append("# manifest_hash=%s" % manifest_hash)
    lines.append("t,cell_x,cell_y,value")
    nc = grid.cells_per_side
    a = np.asarray(averages).reshape(nc, nc)
    for cy in range(nc):
        for cx in range(nc):
            lines.append("%s,%d,%d,%s" % (_fmt(t), cx, cy, _fmt(a[cy, cx])))
    _write_text(path, "\n".join(lines) + "\n")


# the four subtriangles of one P2 triangle, in local node numbering
_P2_SUBTRIANGLES = ((0, 5, 4), (1, 3, 5), (2, 4, 3), (5, 3, 4))


def write_field_vtk(space, coeffs: np.ndarray, path: str, name: str = "phi",
                    manifest_hash: str = "") -> None:
    """Legacy ASCII VTK of a field on the full P2 node cloud.

    Each quadratic triangle is split into its four midpoint subtriangles so
    all nodes carry data and viewers interpolate linearly between them.
    """
    xy = space.node_xy
    tris = []
    for t in range(space.num_triangles):
        dofs = space.tri_dofs[t]
        for sub in _P2_SUBTRIANGLES:
            tris.append((dofs[sub[0]], dofs[sub[1]], dofs[sub[2]]))

    lines = [
        "# vtk DataFile Version 3.0",
        ("field snapshot manifest_hash=%s" % manifest_hash) if manifest_hash
        else "field snapshot",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        "POINTS %d double" % xy.shape[0],
    ]
    for i in range(xy.shape[0]):
        lines.append("%s %s 0" % (_fmt(xy[i, 0]), _fmt(xy[i, 1])))
    lines.append("CELLS %d %d" % (len(tris), 4 * len(tris)))
    for a, b, c in tris:
        lines.append("3 %d %d %d" % (a, b, c))
    lines.append("CELL_TYPES %d" % len(tris))
    lines.extend(["5"] * len(tris))
    lines.append("POINT_DATA %d" % xy.shape[0])
    lines.append("SCALARS %s double 1" % name)
    lines.append("LOOKUP_TABLE default")
    for i in range(xy.shape[0]):
        lines.append(_fmt(coeffs[i]))
    _write_text(path, "\n".join(lines) + "\n")


def write_mesh_vtk(mesh, path: str) -> None:
    """Legacy ASCII VTK of the bare triangulation."""
    lines = [
        "# vtk DataFile Version 3.0",
        "triangulation",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        "POINTS %d double" % mesh.num_vertices,
    ]
    for i in range(mesh.num_vertices):
        lines.append(
            "%s %s 0" % (_fmt(mesh.vertices[i, 0]), _fmt(mesh.vertices[i, 1]))
        )
    lines.append("CELLS %d %d" % (mesh.num_triangles, 4 * mesh.num_triangles))
    for t in range(mesh.num_triangles):
        a, b, c = mesh.triangles[t]
        lines.append("3 %d %d %d" % (a, b, c))
    lines.append("CELL_TYPES %d" % mesh.num_triangles)
    lines.extend(["5"] * mesh.num_triangles)
    _write_text(path, "\n".join(lines) + "\n")


def write_semilog_svg(path: str, curves, title: str = "",
                      manifest_hash: str = "", ylabel: str = "l2 error",
                      floor: float = 1e-16) -> None:
    """Semi-log plot: one polyline per curve, log10 y axis.

    curves is a sequence of (label, t array, y array); nonpositive y values
    are clipped to the floor before taking logs.
    """
    width, height = 840, 520
    ml, mr, mt, mb = 70, 180, 40, 50
    pw, ph = width - ml - mr, height - mt - mb

    prepared = []
    for label, t, y in curves:
        t = np.asarray(t, dtype=float)
        y = np.log10(np.maximum(np.asarray(y, dtype=float), floor))
        prepared.append((label, t, y))

    tmin = min(float(t.min()) for _, t, _ in prepared)
    tmax = max(float(t.max()) for _, t, _ in prepared)
    ymin = min(float(y.min()) for _, _, y in prepared)
    ymax = max(float(y.max()) for _, _, y in prepared)
    if tmax <= tmin:
        tmax = tmin + 1.0
    lo = int(np.floor(ymin))
    hi = int(np.ceil(ymax))
    if hi <= lo:
        hi = lo + 1

    def sx(t):
        return ml + pw * (t - tmin) / (tmax - tmin)

    def sy(v):
        return mt + ph * (hi - v) / (hi - lo)

    out = [
        '<svg xmlns="http://www.w3.org/2000/svg" width="%d" height="%d" '
        'viewBox="0 0 %d %d">' % (width, height, width, height),
    ]
    if manifest_hash:
        out.append("<!-- manifest_hash=%s -->" % manifest_hash)
    out.append('<rect width="%d" height="%d" fill="white"/>' % (width, height))
    if title:
        out.append(
            '<text x="%d" y="24" font-family="sans-serif" font-size="16">'
            "%s</text>" % (ml, title)
        )
    # axes
    out.append(
        '<line x1="%g" y1="%g" x2="%g" y2="%g" stroke="black"/>'
        % (ml, mt + ph, ml + pw, mt + ph)
    )
    out.append(
        '<line x1="%g" y1="%g" x2="%g" y2="%g" stroke="black"/>'
        % (ml, mt, ml, mt + ph)
    )
    step = max(1, (hi - lo) // 10)
    for d in range(lo, hi + 1, step):
        yy = sy(d)
        out.append(
            '<line x1="%g" y1="%g" x2="%g" y2="%g" stroke="#cccccc"/>'
            % (ml, yy, ml + pw, yy)
        )
        out.append(
            '<text x="%g" y="%g" font-family="sans-serif" font-size="11" '
            'text-anchor="end">1e%d</text>' % (ml - 6, yy + 4, d)
        )
    for k in range(6):
        tv = tmin + (tmax - tmin) * k / 5.0
        xx = sx(tv)
        out.append(
            '<line x1="%g" y1="%g" x2="%g" y2="%g" stroke="black"/>'
            % (xx, mt + ph, xx, mt + ph + 4)
        )
        out.append(
            '<text x="%g" y="%g" font-family="sans-serif" font-size="11" '
            'text-anchor="middle">%.3g</text>' % (xx, mt + ph + 18, tv)
        )
    out.append(
        '<text x="16" y="%g" font-family="sans-serif" font-size="12" '
        'transform="rotate(-90 16 %g)">log10 %s</text>'
        % (mt + ph / 2, mt + ph / 2, ylabel)
    )

    for k, (label, t, y) in enumerate(prepared):
        color = _SVG_COLORS[k % len(_SVG_COLORS)]
        pts = " ".join(
            "%.2f,%.2f" % (sx(tv), sy(yv)) for tv, yv in zip(t, y)
        )
        out.append(
            '<polyline fill="none" stroke="%s" stroke-width="1.5" '
            'points="%s"/>' % (color, pts)
        )
        ly = mt + 16 + 18 * k
        out.append(
            '<line x1="%g" y1="%g" x2="%g" y2="%g" stroke="%s" '
            'stroke-width="3"/>' % (ml + pw + 12, ly - 4, ml + pw + 36, ly - 4, color)
        )
        out.append(
            '<text x="%g" y="%g" font-family="sans-serif" font-size="12">'
            "%s</text>" % (ml + pw + 42, ly, label)
        )
    out.append("</svg>")
    _write_text(path, "\n".join(out) + "\n")


def dump_matrix_market(form, path: str) -> None:
    """Assembled matrix in MatrixMarket format for offline inspection."""
    mmwrite(path, form.matrix, comment=form.tag)


def _write_text(path: str, text: str) -> None:
    d = os.path.dirname(path)
    if d:
        os.makedirs(d, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(text)
