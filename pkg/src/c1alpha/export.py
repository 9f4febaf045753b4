"""Artifact writers: run-log CSV, OBJ surface meshes and saved states.

All writers are deterministic: floats are printed with ``repr``-exact
precision and line endings are always ``\\n``.
"""
from __future__ import annotations

import csv
import io
import math
from pathlib import Path

import numpy as np

from .construction import ImmersionState
from .grid import Grid
from .iteration import CSV_COLUMNS

_INT_COLUMNS = {"stage", "grid_res"}


def _fmt(x):
    return format(float(x), ".17g")


def write_csv(path, rows, record_timing=True):
    """Write the fixed run-log columns; ``rows`` are dicts or :class:`StageLog`."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        r = r if isinstance(r, dict) else vars(r)
        out = []
        for c in CSV_COLUMNS:
            if c == "wallclock_ms" and not record_timing:
                out.append("0")
            elif c in _INT_COLUMNS:
                out.append(str(int(r[c])))
            else:
                out.append(_fmt(r[c]))
        w.writerow(out)
    Path(path).write_text(buf.getvalue(), newline="")


def read_csv(path):
    """Rows of a run log; raises ``ValueError`` when the schema is violated."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if tuple(header or ()) != CSV_COLUMNS:
            raise ValueError(f"unexpected columns {header}")
        rows = []
        for lineno, rec in enumerate(reader, 2):
            if len(rec) != len(CSV_COLUMNS):
                raise ValueError(f"line {lineno}: expected {len(CSV_COLUMNS)} fields")
            row = {}
            for c, v in zip(CSV_COLUMNS, rec):
                x = float(v)
                if not math.isfinite(x):
                    raise ValueError(f"line {lineno}: {c} is not finite")
                row[c] = int(x) if c in _INT_COLUMNS else x
            rows.append(row)
    return rows


def mesh_stride(counts, max_vertices):
    """Smallest stride keeping at most ``max_vertices`` per axis (endpoints kept)."""
    return max(1, max(math.ceil((c - 1) / (max_vertices - 1)) for c in counts))


def obj_text(points):
    """OBJ for a ``(nx, ny, 3)`` vertex grid.

    Vertices are row-major (the second index varies fastest); each quad
    ``(i, j)`` becomes the triangles ``(00, 10, 11)`` and ``(00, 11, 01)``.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 3 or pts.shape[-1] != 3:
        raise ValueError("expected a (nx, ny, 3) grid of points")
    nx, ny = pts.shape[:2]
    lines = ["v " + " ".join(_fmt(c) for c in p) for p in pts.reshape(-1, 3)]
    idx = np.arange(1, nx * ny + 1).reshape(nx, ny)
    for i in range(nx - 1):
        for j in range(ny - 1):
            a, b, c, d = idx[i, j], idx[i + 1, j], idx[i + 1, j + 1], idx[i, j + 1]
            lines.append(f"f {a} {b} {c}")
            lines.append(f"f {a} {c} {d}")
    return "\n".join(lines) + "\n"


def write_obj(path, state: ImmersionState, max_vertices=513):
    """Export a surface in R^3, subsampled to at most ``max_vertices`` per axis."""
    if state.m != 3 or state.n != 2:
        raise ValueError("OBJ export needs a surface in R^3")
    k = mesh_stride(state.grid.counts, max_vertices)
    sl = tuple(np.r_[np.arange(0, c - 1, k), c - 1] for c in state.grid.counts)
    pts = state.u[np.ix_(*sl)]
    Path(path).write_text(obj_text(pts), newline="")
    return pts.shape[:2]


def save_state(path, state: ImmersionState):
    g = state.grid
    np.savez(path, u=state.u, grad_u=state.grad_u, origin=np.array(g.origin),
             spacing=np.array(g.spacing), counts=np.array(g.counts),
             periodic=np.array(sorted(g.periodic_axes), dtype=int))


def load_state(path) -> ImmersionState:
    with np.load(path) as d:
        grid = Grid(origin=tuple(d["origin"].tolist()), spacing=tuple(d["spacing"].tolist()),
                    counts=tuple(int(c) for c in d["counts"]),
                    periodic_axes=frozenset(int(a) for a in d["periodic"]))
        return ImmersionState(grid, d["u"], d["grad_u"])
