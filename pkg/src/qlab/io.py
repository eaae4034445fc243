"""Field snapshot format (qlab-field v1) and CSV export."""

from __future__ import annotations

import csv

import numpy as np

from .grid import Grid, ScalarField

__all__ = ["write_field", "read_field", "write_field_csv"]

_MAGIC = "qlab-field v1"


def write_field(field: ScalarField, path) -> None:
    """Write ``qlab-field v1``: a header line
    ``qlab-field v1 nx ny nz lox loy loz hix hiy hiz`` followed by one decimal
    value per line in x-fastest order."""
    g = field.grid
    header = " ".join(
        [_MAGIC]
        + [str(m) for m in g.n]
        + [f"{v:.17g}" for v in g.lo]
        + [f"{v:.17g}" for v in g.hi]
    )
    flat = field.values.flatten(order="F")  # x-fastest
    with open(path, "w") as fh:
        fh.write(header + "\n")
        fh.write("\n".join(f"{v:.17g}" for v in flat))
        fh.write("\n")


def read_field(path) -> ScalarField:
    with open(path) as fh:
        header = fh.readline().strip().split()
        if " ".join(header[:2]) != _MAGIC:
            raise ValueError(f"not a {_MAGIC} file: {path}")
        n = tuple(int(v) for v in header[2:5])
        lo = tuple(float(v) for v in header[5:8])
        hi = tuple(float(v) for v in header[8:11])
        data = np.loadtxt(fh)
    grid = Grid(lo, hi, n)
    values = np.asarray(data, dtype=float).reshape(n, order="F")
    return ScalarField(grid, values)


def write_field_csv(field: ScalarField, path) -> None:
    """CSV export with columns x, y, z, value (x-fastest order)."""
    g = field.grid
    pts = g.points()
    xs = pts[..., 0].flatten(order="F")
    ys = pts[..., 1].flatten(order="F")
    zs = pts[..., 2].flatten(order="F")
    vals = field.values.flatten(order="F")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "z", "value"])
        for row in zip(xs, ys, zs, vals):
            writer.writerow([f"{v:.17g}" for v in row])
