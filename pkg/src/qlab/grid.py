"""Regular cell-centered grids, discrete horizontal derivatives X_i^eps and
their exact measure-weighted adjoints, masks and deterministic integration.

The derivative stencils are exact linear combinations of centered axis
differences (second-order one-sided rows at the box faces), so adjoints are
literal operator transposes and discrete integration by parts holds to
rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy import ndimage

from .errors import EmptyMask, MeasureDegenerate, OutOfDomain
from .heis import group_inv, group_mul, koranyi_gauge

__all__ = [
    "Grid",
    "ScalarField",
    "Mask",
    "apply_horizontal_derivative",
    "transpose_horizontal_derivative",
    "adjoint_derivative",
    "horizontal_gradient",
    "integrate",
    "inner_product",
    "gauge_ball_mask",
    "gauge_annulus_mask",
    "full_box_mask",
    "mask_from_interior",
]

_AXIS_CROSS = ndimage.generate_binary_structure(3, 1)


@lru_cache(maxsize=64)
def _diff_matrix(n: int, h: float) -> sp.csr_matrix:
    """Centered 1-D difference, second-order one-sided at both ends."""
    d = sp.lil_matrix((n, n))
    c = 1.0 / (2.0 * h)
    d[0, 0], d[0, 1], d[0, 2] = -3.0 * c, 4.0 * c, -1.0 * c
    for_rows = np.arange(1, n - 1)
    d[for_rows, for_rows - 1] = -c
    d[for_rows, for_rows + 1] = c
    d[n - 1, n - 3], d[n - 1, n - 2], d[n - 1, n - 1] = c, -4.0 * c, 3.0 * c
    return d.tocsr()


@dataclass(frozen=True)
class Grid:
    """Cell-centered grid on a box: node i sits at lo + (i + 1/2) h."""

    lo: tuple[float, float, float]
    hi: tuple[float, float, float]
    n: tuple[int, int, int]

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        n = tuple(int(v) for v in np.atleast_1d(self.n))
        if len(lo) != 3 or len(hi) != 3 or len(n) != 3:
            raise ValueError("lo, hi, n must have length 3")
        if any(b <= a for a, b in zip(lo, hi)):
            raise ValueError("box corners must satisfy hi > lo componentwise")
        if any(m < 8 for m in n):
            raise ValueError("need at least 8 nodes per axis")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "n", n)

    @staticmethod
    def cube(half_width: float, n: int, center=(0.0, 0.0, 0.0)) -> "Grid":
        c = np.asarray(center, dtype=float)
        lo = c - half_width
        hi = c + half_width
        return Grid(tuple(lo), tuple(hi), (n, n, n))

    @property
    def h(self) -> tuple[float, float, float]:
        return tuple((b - a) / m for a, b, m in zip(self.lo, self.hi, self.n))

    @property
    def cell_volume(self) -> float:
        hx, hy, hz = self.h
        return hx * hy * hz

    def axis_coords(self, axis: int) -> np.ndarray:
        h = self.h[axis]
        return self.lo[axis] + (np.arange(self.n[axis]) + 0.5) * h

    def coords(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Broadcastable coordinate arrays X, Y, Z of the node lattice."""
        xs = self.axis_coords(0)[:, None, None]
        ys = self.axis_coords(1)[None, :, None]
        zs = self.axis_coords(2)[None, None, :]
        return xs, ys, zs

    def points(self) -> np.ndarray:
        """All nodes as an (nx, ny, nz, 3) array."""
        xs, ys, zs = self.coords()
        shape = self.n
        out = np.empty(shape + (3,))
        out[..., 0] = np.broadcast_to(xs, shape)
        out[..., 1] = np.broadcast_to(ys, shape)
        out[..., 2] = np.broadcast_to(zs, shape)
        return out

    def nearest_index(self, p) -> tuple[int, int, int]:
        p = np.asarray(p, dtype=float)
        idx = []
        for a in range(3):
            i = int(round((p[a] - self.lo[a]) / self.h[a] - 0.5))
            idx.append(min(max(i, 0), self.n[a] - 1))
        return tuple(idx)

    def contains(self, p) -> bool:
        p = np.asarray(p, dtype=float)
        return bool(
            np.all(p >= np.asarray(self.lo)) and np.all(p <= np.asarray(self.hi))
        )

    def _apply_along(self, mat: sp.csr_matrix, u: np.ndarray, axis: int) -> np.ndarray:
        m = np.moveaxis(u, axis, 0)
        shp = m.shape
        out = (mat @ np.ascontiguousarray(m).reshape(shp[0], -1)).reshape(shp)
        return np.moveaxis(out, 0, axis)

    def diff(self, u: np.ndarray, axis: int) -> np.ndarray:
        """Centered axis difference D_axis u (one-sided at the faces)."""
        return self._apply_along(_diff_matrix(self.n[axis], self.h[axis]), u, axis)

    def diff_t(self, u: np.ndarray, axis: int) -> np.ndarray:
        """Exact transpose of :meth:`diff`."""
        mat = _diff_matrix(self.n[axis], self.h[axis]).T.tocsr()
        return self._apply_along(mat, u, axis)


@dataclass
class ScalarField:
    """Real values on the nodes of a grid."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.n:
            raise ValueError(f"values shape {v.shape} does not match grid {self.grid.n}")
        if not np.isfinite(v).all():
            raise ValueError("field values must be finite")
        self.values = v

    @staticmethod
    def from_function(grid: Grid, fn) -> "ScalarField":
        return ScalarField(grid, np.asarray(fn(grid.points()), dtype=float))

    @staticmethod
    def constant(grid: Grid, c: float) -> "ScalarField":
        return ScalarField(grid, np.full(grid.n, float(c)))

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy())


def _values(u, grid: Grid) -> np.ndarray:
    if isinstance(u, ScalarField):
        if u.grid is not grid and u.grid != grid:
            raise ValueError("field lives on a different grid")
        return u.values
    a = np.asarray(u, dtype=float)
    if a.shape == grid.n:
        return a
    if a.ndim == 0:
        return np.full(grid.n, float(a))
    raise ValueError("cannot interpret values for this grid")


def apply_horizontal_derivative(u, i: int, eps: float = 0.0, grid: Grid | None = None):
    """Discrete X_i^eps u: X1 = D_x - (y/2) D_z, X2 = D_y + (x/2) D_z, X3 = eps D_z."""
    if isinstance(u, ScalarField):
        grid = u.grid
    if grid is None:
        raise ValueError("grid required when u is a bare array")
    v = _values(u, grid)
    _, ys, zs = grid.coords()
    xs = grid.axis_coords(0)[:, None, None]
    if i == 1:
        out = grid.diff(v, 0) - (ys / 2.0) * grid.diff(v, 2)
    elif i == 2:
        out = grid.diff(v, 1) + (xs / 2.0) * grid.diff(v, 2)
    elif i == 3:
        if eps < 0:
            raise ValueError("eps must be nonnegative")
        out = float(eps) * grid.diff(v, 2) if eps > 0 else np.zeros_like(v)
    else:
        raise ValueError("derivative index must be 1, 2 or 3")
    return ScalarField(grid, out) if isinstance(u, ScalarField) else out


def transpose_horizontal_derivative(w, i: int, eps: float = 0.0, grid: Grid | None = None):
    """Plain transpose (X_i^eps)^T with respect to the unweighted node sum."""
    if isinstance(w, ScalarField):
        grid = w.grid
    if grid is None:
        raise ValueError("grid required when w is a bare array")
    v = _values(w, grid)
    ys = grid.axis_coords(1)[None, :, None]
    xs = grid.axis_coords(0)[:, None, None]
    if i == 1:
        out = grid.diff_t(v, 0) - grid.diff_t((ys / 2.0) * v, 2)
    elif i == 2:
        out = grid.diff_t(v, 1) + grid.diff_t((xs / 2.0) * v, 2)
    elif i == 3:
        if eps < 0:
            raise ValueError("eps must be nonnegative")
        out = float(eps) * grid.diff_t(v, 2) if eps > 0 else np.zeros_like(v)
    else:
        raise ValueError("derivative index must be 1, 2 or 3")
    return ScalarField(grid, out) if isinstance(w, ScalarField) else out


def adjoint_derivative(v, i: int, eps: float = 0.0, measure=None, grid: Grid | None = None):
    """Adjoint X_i^{h,*} v = omega^{-1} (X_i^h)^T (omega v), the exact transpose
    with respect to the inner product sum(u v omega h^3)."""
    if isinstance(v, ScalarField):
        grid = v.grid
    if grid is None:
        raise ValueError("grid required when v is a bare array")
    vals = _values(v, grid)
    if measure is None:
        om = np.ones(grid.n)
    else:
        om = _values(measure, grid)
    if np.any(om <= 0) or not np.isfinite(om).all():
        raise MeasureDegenerate("measure must be strictly positive and finite")
    out = transpose_horizontal_derivative(om * vals, i, eps=eps, grid=grid)
    out = (out.values if isinstance(out, ScalarField) else out) / om
    return ScalarField(grid, out) if isinstance(v, ScalarField) else out


def horizontal_gradient(u, eps: float = 0.0, grid: Grid | None = None) -> np.ndarray:
    """Stacked frame derivatives (X1 u, X2 u, eps X3 u), shape (3, nx, ny, nz)."""
    if isinstance(u, ScalarField):
        grid = u.grid
        u = u.values
    if grid is None:
        raise ValueError("grid required when u is a bare array")
    return np.stack(
        [
            apply_horizontal_derivative(u, 1, grid=grid),
            apply_horizontal_derivative(u, 2, grid=grid),
            apply_horizontal_derivative(u, 3, eps=eps, grid=grid),
        ]
    )


@dataclass
class Mask:
    """Interior nodes plus the enclosing pinned shell.

    ``boundary`` is the two-node stencil collar of ``interior``: one node for
    the derivative stencil at interior nodes, a second so the quadrature rim
    (interior plus the first shell) also has computable derivatives.
    """

    grid: Grid
    interior: np.ndarray
    boundary: np.ndarray

    def __post_init__(self):
        if self.interior.shape != self.grid.n or self.boundary.shape != self.grid.n:
            raise ValueError("mask arrays must match the grid shape")
        if np.any(self.interior & self.boundary):
            raise ValueError("interior and boundary must be disjoint")

    @property
    def shell1(self) -> np.ndarray:
        """First stencil shell around the interior."""
        grown = ndimage.binary_dilation(self.interior, structure=_AXIS_CROSS)
        return grown & ~self.interior

    @property
    def quad_region(self) -> np.ndarray:
        """Quadrature support: interior plus its first stencil shell.

        Summing energies over this set makes every interior node's stencil
        row present in the sum, so constant discrete fluxes are exactly
        divergence-free and pinned-collar solves have exact critical points.
        """
        return self.interior | self.shell1

    @property
    def n_interior(self) -> int:
        return int(np.count_nonzero(self.interior))

    def interior_depth(self) -> np.ndarray:
        """Taxicab distance to the complement of the interior, in nodes."""
        return ndimage.distance_transform_cdt(self.interior, metric="taxicab")

    def inner_half(self) -> np.ndarray:
        """Deep half of the interior (taxicab depth at least half the max)."""
        depth = self.interior_depth()
        dmax = int(depth.max())
        if dmax <= 1:
            return self.interior.copy()
        return depth >= max(1, (dmax + 1) // 2)


def mask_from_interior(grid: Grid, interior: np.ndarray) -> Mask:
    if not np.any(interior):
        raise EmptyMask("mask has no interior nodes")
    shell1 = ndimage.binary_dilation(interior, structure=_AXIS_CROSS) & ~interior
    grown2 = ndimage.binary_dilation(interior | shell1, structure=_AXIS_CROSS)
    boundary = grown2 & ~interior
    return Mask(grid, interior.astype(bool), boundary.astype(bool))


def _gauge_ball_extent(center, r: float) -> tuple[float, float, float]:
    """Coordinate bounding half-widths of the gauge ball around ``center``.

    The left translation twists the ball: its frame-vertical part r^2/4 picks
    up (cx dy - cy dx)/2 in coordinates, bounded by (|cx| + |cy|) r / 2.
    """
    cx, cy = abs(float(center[0])), abs(float(center[1]))
    return (r, r, r * r / 4.0 + (cx + cy) * r / 2.0)


def gauge_ball_mask(center, r: float, grid: Grid) -> Mask:
    """Nodes with koranyi_gauge(center^{-1} p) < r plus the stencil collar."""
    if r <= 0:
        raise EmptyMask("ball radius must be positive")
    center = np.asarray(center, dtype=float)
    hx, hy, hz = grid.h
    margin = (2.0 * hx, 2.0 * hy, 2.0 * hz)
    extent = _gauge_ball_extent(center, r)
    for a in range(3):
        if center[a] - extent[a] - margin[a] < grid.lo[a] or center[a] + extent[a] + margin[a] > grid.hi[a]:
            raise OutOfDomain("gauge ball does not fit in the box with a 2-node margin")
    pts = grid.points()
    gauge = koranyi_gauge(group_mul(group_inv(center), pts))
    return mask_from_interior(grid, gauge < r)


def gauge_annulus_mask(center, r: float, R: float, grid: Grid) -> Mask:
    """Nodes with r < gauge < R plus the stencil collar."""
    if not 0 < r < R:
        raise ValueError("need 0 < r < R")
    center = np.asarray(center, dtype=float)
    hx, hy, hz = grid.h
    margin = (2.0 * hx, 2.0 * hy, 2.0 * hz)
    extent = _gauge_ball_extent(center, R)
    for a in range(3):
        if center[a] - extent[a] - margin[a] < grid.lo[a] or center[a] + extent[a] + margin[a] > grid.hi[a]:
            raise OutOfDomain("gauge annulus does not fit in the box with a 2-node margin")
    pts = grid.points()
    gauge = koranyi_gauge(group_mul(group_inv(center), pts))
    return mask_from_interior(grid, (gauge > r) & (gauge < R))


def full_box_mask(grid: Grid, margin: int = 0) -> Mask:
    """Mask covering the box up to ``margin`` cells from each face."""
    interior = np.zeros(grid.n, dtype=bool)
    if margin == 0:
        interior[:] = True
        return Mask(grid, interior, np.zeros(grid.n, dtype=bool))
    sl = tuple(slice(margin, m - margin) for m in grid.n)
    interior[sl] = True
    return mask_from_interior(grid, interior)


def integrate(u, measure=None, mask: Mask | None = None, grid: Grid | None = None) -> float:
    """Deterministic sum(u omega h^3) over the mask interior (exact fsum)."""
    if isinstance(u, ScalarField):
        grid = u.grid
    if grid is None:
        raise ValueError("grid required when u is a bare array")
    vals = _values(u, grid)
    om = np.ones(grid.n) if measure is None else _values(measure, grid)
    region = mask.interior if mask is not None else np.ones(grid.n, dtype=bool)
    cell = grid.cell_volume
    data = (vals * om)[region].ravel()
    return math.fsum(data) * cell


def inner_product(u, v, measure=None, mask: Mask | None = None, grid: Grid | None = None) -> float:
    """Deterministic sum(u v omega h^3) over the mask interior."""
    if isinstance(u, ScalarField):
        grid = u.grid
    if grid is None:
        raise ValueError("grid required when u is a bare array")
    uv = _values(u, grid) * _values(v, grid)
    return integrate(uv, measure=measure, mask=mask, grid=grid)
